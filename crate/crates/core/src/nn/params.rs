//! Uniform access to the trainable arrays of a network.

use crate::error::{Error, Result};

/// A named view of one parameter array.
#[derive(Debug, Clone, Copy)]
pub struct ParamView<'a> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub data: &'a [f64],
}

/// Anything that owns a fixed, ordered list of parameter arrays.
///
/// Gradients are represented by a value of the same type, so the two lists
/// line up array by array.
pub trait Parameters {
    fn params(&self) -> Vec<ParamView<'_>>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for p in self.params() {
            out.extend_from_slice(p.data);
        }
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.params_mut().iter().map(|s| s.len()).sum();
        if total != flat.len() {
            return Err(Error::config(format!(
                "flat parameter vector has {} entries, expected {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for slot in self.params_mut() {
            let n = slot.len();
            slot.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn fill(&mut self, value: f64) {
        for slot in self.params_mut() {
            slot.fill(value);
        }
    }

    /// `self += scale * other`, array by array.
    fn add_scaled(&mut self, other: &Self, scale: f64) -> Result<()>
    where
        Self: Sized,
    {
        let src = other.flatten();
        let mut offset = 0;
        for slot in self.params_mut() {
            let n = slot.len();
            if offset + n > src.len() {
                return Err(Error::config("parameter sets differ in size"));
            }
            for (d, s) in slot.iter_mut().zip(&src[offset..offset + n]) {
                *d += scale * s;
            }
            offset += n;
        }
        if offset != src.len() {
            return Err(Error::config("parameter sets differ in size"));
        }
        Ok(())
    }
}

fn same_shapes<P: Parameters>(a: &P, b: &P) -> bool {
    let (pa, pb) = (a.params(), b.params());
    pa.len() == pb.len() && pa.iter().zip(&pb).all(|(x, y)| x.shape == y.shape)
}

/// Polyak averaging: `target = tau * online + (1 - tau) * target`.
///
/// `tau = 1` copies and `tau = 0` leaves the target untouched, both exactly.
pub fn soft_update<P: Parameters>(online: &P, target: &mut P, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::config(format!("tau must lie in [0, 1], got {tau}")));
    }
    if !same_shapes(online, target) {
        return Err(Error::config("soft update between networks of different shape"));
    }
    let src = online.flatten();
    let mut offset = 0;
    for slot in target.params_mut() {
        let n = slot.len();
        let s = &src[offset..offset + n];
        if tau == 1.0 {
            slot.copy_from_slice(s);
        } else if tau != 0.0 {
            for (t, o) in slot.iter_mut().zip(s) {
                *t = tau * o + (1.0 - tau) * *t;
            }
        }
        offset += n;
    }
    Ok(())
}
