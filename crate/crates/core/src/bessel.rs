//! Bessel functions of the first kind for integer order.
//!
//! All orders are produced at once by Miller's backward recurrence, normalized
//! with the identity `J_0(x) + 2 Σ_{k≥1} J_{2k}(x) = 1`. The recurrence is
//! stable downward for every order, so the table is accurate both in the
//! oscillatory region (`|n| < |x|`) and in the evanescent tail.

/// Table of `J_n(x)` for `-max_order ≤ n ≤ max_order` at a fixed argument.
#[derive(Debug, Clone)]
pub struct BesselTable {
    x: f64,
    /// `values[n]` holds `J_n(|x|)` for `n ≥ 0`.
    values: Vec<f64>,
}

impl BesselTable {
    pub fn new(x: f64, max_order: usize) -> Self {
        let ax = x.abs();
        let mut values = vec![0.0; max_order + 1];
        if ax == 0.0 {
            values[0] = 1.0;
            return BesselTable { x, values };
        }
        // Start well above both the requested order and the argument so that
        // the dominant (J) solution has taken over by the time we reach them.
        let top = max_order.max(ax.ceil() as usize);
        let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
        if start % 2 == 1 {
            start += 1;
        }

        let rescale = 1.0e250;
        let mut j_next = 0.0_f64; // J_{k+1}
        let mut j_cur = 1.0e-300_f64; // J_k, arbitrary seed
        let mut norm = 0.0_f64;
        for k in (1..=start).rev() {
            let j_prev = 2.0 * k as f64 / ax * j_cur - j_next;
            j_next = j_cur;
            j_cur = j_prev;
            // j_cur now approximates J_{k-1}
            let order = k - 1;
            if order <= max_order {
                values[order] = j_cur;
            }
            if order % 2 == 0 && order > 0 {
                norm += 2.0 * j_cur;
            }
            if j_cur.abs() > rescale {
                j_cur /= rescale;
                j_next /= rescale;
                norm /= rescale;
                for v in values.iter_mut() {
                    *v /= rescale;
                }
            }
        }
        norm += j_cur;
        for v in values.iter_mut() {
            *v /= norm;
        }
        BesselTable { x, values }
    }

    pub fn argument(&self) -> f64 {
        self.x
    }

    pub fn max_order(&self) -> usize {
        self.values.len() - 1
    }

    /// `J_n(x)` for any integer order. Orders beyond the table are treated
    /// as zero; callers size the table so those terms are below roundoff.
    pub fn get(&self, n: i64) -> f64 {
        let m = n.unsigned_abs() as usize;
        let Some(&v) = self.values.get(m) else {
            return 0.0;
        };
        // J_{-n}(x) = (-1)^n J_n(x), J_n(-x) = (-1)^n J_n(x)
        let mut flips = 0;
        if n < 0 && m % 2 == 1 {
            flips += 1;
        }
        if self.x < 0.0 && m % 2 == 1 {
            flips += 1;
        }
        if flips % 2 == 1 {
            -v
        } else {
            v
        }
    }
}

/// Single evaluation of `J_n(x)`.
pub fn bessel_j(n: i64, x: f64) -> f64 {
    BesselTable::new(x, n.unsigned_abs() as usize).get(n)
}
