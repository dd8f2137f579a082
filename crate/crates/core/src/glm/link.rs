use statrs::function::erf::{erfc, erfc_inv};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
// switch point to the asymptotic series
const TAIL: f64 = -35.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Probit,
    Logit,
    /// Only used to tag linear-probability fits.
    Identity,
}

impl Link {
    pub fn as_str(self) -> &'static str {
        match self {
            Link::Probit => "probit",
            Link::Logit => "logit",
            Link::Identity => "identity",
        }
    }

    pub fn cdf(self, eta: f64) -> f64 {
        match self {
            Link::Probit => norm_cdf(eta),
            Link::Logit => logistic(eta),
            Link::Identity => eta,
        }
    }

    /// Derivative of the inverse link.
    pub fn pdf(self, eta: f64) -> f64 {
        match self {
            Link::Probit => norm_pdf(eta),
            Link::Logit => {
                let p = logistic(eta);
                p * (1.0 - p)
            }
            Link::Identity => 1.0,
        }
    }

    pub fn quantile(self, p: f64) -> f64 {
        match self {
            Link::Probit => norm_quantile(p),
            Link::Logit => (p / (1.0 - p)).ln(),
            Link::Identity => p,
        }
    }

    /// Log-likelihood of one binary observation, its score with respect to eta,
    /// and the negative second derivative with respect to eta.
    #[inline]
    pub fn obs_terms(self, y: f64, eta: f64) -> (f64, f64, f64) {
        let q = 2.0 * y - 1.0;
        match self {
            Link::Probit => {
                let z = q * eta;
                let r = mills(z);
                (log_norm_cdf(z), q * r, r * (z + r))
            }
            Link::Logit => {
                let p = logistic(eta);
                (-softplus(-q * eta), y - p, p * (1.0 - p))
            }
            Link::Identity => unreachable!("identity link has no likelihood"),
        }
    }
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    let q = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // one Newton polish
    let d = norm_pdf(q);
    if d > 0.0 {
        q - (norm_cdf(q) - p) / d
    } else {
        q
    }
}

// 1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8 - 945/z^10
fn tail_series(z: f64) -> f64 {
    let u = 1.0 / (z * z);
    1.0 - u * (1.0 - 3.0 * u * (1.0 - 5.0 * u * (1.0 - 7.0 * u * (1.0 - 9.0 * u))))
}

pub fn log_norm_cdf(z: f64) -> f64 {
    if z < TAIL {
        -0.5 * z * z - LN_SQRT_2PI - (-z).ln() + tail_series(z).ln()
    } else if z > 5.0 {
        // ln(1 - x) for small upper tail mass
        (-norm_cdf(-z)).ln_1p()
    } else {
        norm_cdf(z).ln()
    }
}

/// phi(z) / Phi(z).
pub fn mills(z: f64) -> f64 {
    if z < TAIL {
        -z / tail_series(z)
    } else {
        (-0.5 * z * z - LN_SQRT_2PI - log_norm_cdf(z)).exp()
    }
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
