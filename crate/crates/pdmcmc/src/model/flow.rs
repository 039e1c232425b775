use super::State;

/// Deterministic dynamics between events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    /// `(x, v) -> (x + t v, v)`.
    Linear,
    /// Unit-frequency phase rotation `(x, v) -> (x cos t + v sin t, v cos t - x sin t)`,
    /// the Hamiltonian flow of `|x|^2/2 + |v|^2/2`.
    Rotation,
}

impl Flow {
    pub fn advance(&self, z: &mut State, t: f64) {
        match self {
            Flow::Linear => {
                for (xi, vi) in z.x.iter_mut().zip(&z.v) {
                    *xi += t * vi;
                }
            }
            Flow::Rotation => {
                let (s, c) = t.sin_cos();
                for (xi, vi) in z.x.iter_mut().zip(z.v.iter_mut()) {
                    let x = *xi;
                    let v = *vi;
                    *xi = x * c + v * s;
                    *vi = v * c - x * s;
                }
            }
        }
    }

    pub fn at(&self, z: &State, t: f64) -> State {
        let mut out = z.clone();
        self.advance(&mut out, t);
        out
    }
}

pub fn linear_flow(z: &State, t: f64) -> State {
    Flow::Linear.at(z, t)
}

pub fn rotation_flow(z: &State, t: f64) -> State {
    Flow::Rotation.at(z, t)
}
