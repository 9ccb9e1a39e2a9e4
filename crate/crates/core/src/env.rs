//! Random conductance environments.
//!
//! A [`ConductanceField`] assigns a positive conductance to every
//! nearest-neighbor edge of `Z^d`, deterministically from `(law, d, seed)`:
//! the value of an edge is a counter-based hash of the seed and the
//! canonical edge coordinates pushed through the law's inverse CDF. No
//! storage is involved, so fields cover all of `Z^d` in O(1) memory and are
//! safe to query from any number of threads.

use crate::error::LawError;
use crate::lattice::Edge;
use crate::rng;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use hashbrown::HashMap;

/// Marginal used by the uniformly elliptic law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginal {
    /// `1 - delta` or `1 + delta`, each with probability 1/2.
    TwoPointSym,
    /// Uniform on the interval `[1 - delta, 1 + delta]`.
    UniformInterval,
}

/// The distribution of a single conductance.
///
/// Sampling laws never emit the value 0; a vanishing conductance is only
/// representable through [`ConductanceField::zero_kappa_projection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvironmentLaw {
    /// Every edge carries the constant `c > 0`.
    Homogeneous { c: f64 },
    /// Values confined to `[1 - delta, 1 + delta]`, `delta` in `[0, 1)`.
    UniformElliptic { delta: f64, marginal: Marginal },
    /// Value 1 with probability `p`, `kappa` with probability `1 - p`.
    TwoPoint { p: f64, kappa: f64 },
}

impl EnvironmentLaw {
    pub fn validate(&self) -> Result<(), LawError> {
        match *self {
            EnvironmentLaw::Homogeneous { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(LawError::InvalidParameter { name: "c", value: c });
                }
            }
            EnvironmentLaw::UniformElliptic { delta, .. } => {
                if !(0.0..1.0).contains(&delta) {
                    return Err(LawError::InvalidParameter { name: "delta", value: delta });
                }
            }
            EnvironmentLaw::TwoPoint { p, kappa } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(LawError::InvalidParameter { name: "p", value: p });
                }
                if !(kappa > 0.0 && kappa <= 1.0) {
                    return Err(LawError::InvalidParameter { name: "kappa", value: kappa });
                }
            }
        }
        Ok(())
    }

    /// Inverse CDF at `u` in `[0, 1)`.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            EnvironmentLaw::Homogeneous { c } => c,
            EnvironmentLaw::UniformElliptic { delta, marginal } => match marginal {
                Marginal::TwoPointSym => {
                    if u < 0.5 {
                        1.0 - delta
                    } else {
                        1.0 + delta
                    }
                }
                Marginal::UniformInterval => 1.0 - delta + 2.0 * delta * u,
            },
            EnvironmentLaw::TwoPoint { p, kappa } => {
                if u < p {
                    1.0
                } else {
                    kappa
                }
            }
        }
    }

    /// CDF of the marginal, used by goodness-of-fit tests.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            EnvironmentLaw::Homogeneous { c } => {
                if x < c {
                    0.0
                } else {
                    1.0
                }
            }
            EnvironmentLaw::UniformElliptic { delta, marginal } => match marginal {
                Marginal::TwoPointSym => {
                    if x < 1.0 - delta {
                        0.0
                    } else if x < 1.0 + delta {
                        0.5
                    } else {
                        1.0
                    }
                }
                Marginal::UniformInterval => {
                    if delta == 0.0 {
                        if x < 1.0 {
                            0.0
                        } else {
                            1.0
                        }
                    } else {
                        ((x - (1.0 - delta)) / (2.0 * delta)).clamp(0.0, 1.0)
                    }
                }
            },
            EnvironmentLaw::TwoPoint { p, kappa } => {
                if x < kappa {
                    0.0
                } else if x < 1.0 {
                    1.0 - p
                } else {
                    1.0
                }
            }
        }
    }

    /// Ellipticity half-width: smallest `delta` with support in
    /// `[1 - delta, 1 + delta]` after rescaling by the midpoint, or
    /// `None` for the two-point law whose ratio is `1/kappa`.
    pub fn ellipticity_delta(&self) -> Option<f64> {
        match *self {
            EnvironmentLaw::Homogeneous { .. } => Some(0.0),
            EnvironmentLaw::UniformElliptic { delta, .. } => Some(delta),
            EnvironmentLaw::TwoPoint { .. } => None,
        }
    }
}

/// Read access to a symmetric edge-weight field on `Z^d`.
///
/// Implementations must be pure: the same edge always yields the same
/// value, regardless of query order or thread.
pub trait Conductances {
    fn dim(&self) -> usize;

    /// Weight of the canonical edge `{base, base + e_axis}`, addressed by
    /// raw base coordinates. Hot paths use this form to avoid allocation.
    fn conductance_at(&self, base: &[i64], axis: usize) -> f64;

    fn conductance(&self, e: &Edge) -> f64 {
        self.conductance_at(e.base().coords(), e.axis())
    }
}

impl<F: Conductances + ?Sized> Conductances for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn conductance_at(&self, base: &[i64], axis: usize) -> f64 {
        (**self).conductance_at(base, axis)
    }
}

/// Lazily evaluated iid conductance field, determined by `(law, d, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceField {
    law: EnvironmentLaw,
    d: usize,
    seed: u64,
    zero_kappa: bool,
    key: rng::StreamKey,
}

impl ConductanceField {
    pub fn new(law: EnvironmentLaw, d: usize, seed: u64) -> Result<Self, LawError> {
        law.validate()?;
        if d == 0 {
            return Err(LawError::InvalidParameter { name: "d", value: 0.0 });
        }
        Ok(ConductanceField {
            law,
            d,
            seed,
            zero_kappa: false,
            key: rng::stream_key(seed, rng::DOMAIN_FIELD, 0),
        })
    }

    pub fn law(&self) -> &EnvironmentLaw {
        &self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_zero_kappa(&self) -> bool {
        self.zero_kappa
    }

    /// Percolation projection: the same field with every kappa-edge mapped
    /// to conductance 0. Only defined for the two-point law.
    pub fn zero_kappa_projection(&self) -> Result<Self, LawError> {
        match self.law {
            EnvironmentLaw::TwoPoint { .. } => {
                let mut f = self.clone();
                f.zero_kappa = true;
                Ok(f)
            }
            _ => Err(LawError::NotTwoPoint),
        }
    }

    /// The uniform driving the edge draw, exposed for marginal tests.
    #[inline]
    pub fn edge_unit(&self, base: &[i64], axis: usize) -> f64 {
        let mut h = rng::absorb(self.key.0, axis as u64);
        for &c in base {
            h = rng::absorb(h, c as u64);
        }
        rng::unit_f64(h)
    }
}

impl Conductances for ConductanceField {
    fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn conductance_at(&self, base: &[i64], axis: usize) -> f64 {
        debug_assert_eq!(base.len(), self.d);
        let u = self.edge_unit(base, axis);
        if self.zero_kappa {
            // Two-point law only: open edges keep weight 1, the rest drop
            // to 0 instead of kappa.
            if let EnvironmentLaw::TwoPoint { p, .. } = self.law {
                return if u < p { 1.0 } else { 0.0 };
            }
        }
        self.law.quantile(u)
    }
}

/// A base field with finitely many explicitly pinned edges.
///
/// Used to plant hand-built local configurations (traps, dead ends,
/// kappa pockets) inside an otherwise sampled environment.
#[derive(Debug, Clone)]
pub struct OverlayField<F> {
    base: F,
    overrides: HashMap<(Vec<i64>, usize), f64>,
}

impl<F: Conductances> OverlayField<F> {
    pub fn new(base: F) -> Self {
        OverlayField { base, overrides: HashMap::new() }
    }

    /// Pin the canonical edge `{base, base + e_axis}` to `value`.
    pub fn set(&mut self, base: Vec<i64>, axis: usize, value: f64) -> &mut Self {
        self.overrides.insert((base, axis), value);
        self
    }

    pub fn set_edge(&mut self, e: &Edge, value: f64) -> &mut Self {
        self.set(e.base().coords().to_vec(), e.axis(), value)
    }
}

impl<F: Conductances> Conductances for OverlayField<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn conductance_at(&self, base: &[i64], axis: usize) -> f64 {
        if !self.overrides.is_empty() {
            if let Some(v) = self.overrides.get(&(base.to_vec(), axis)) {
                return *v;
            }
        }
        self.base.conductance_at(base, axis)
    }
}

// ---------------------------------------------------------------------------
// Flat key-value law specification
// ---------------------------------------------------------------------------

impl ConductanceField {
    /// Canonical text form, e.g.
    /// `law=two_point, d=2, p=0.95, kappa=0.001, seed=42`.
    /// Projected fields append `projected=true`.
    pub fn spec_string(&self) -> String {
        let mut s = match self.law {
            EnvironmentLaw::Homogeneous { c } => {
                format!("law=homogeneous, d={}, c={}", self.d, c)
            }
            EnvironmentLaw::UniformElliptic { delta, marginal } => {
                let m = match marginal {
                    Marginal::TwoPointSym => "two_point_sym",
                    Marginal::UniformInterval => "uniform_interval",
                };
                format!("law=uniform_elliptic, d={}, delta={}, marginal={}", self.d, delta, m)
            }
            EnvironmentLaw::TwoPoint { p, kappa } => {
                format!("law=two_point, d={}, p={}, kappa={}", self.d, p, kappa)
            }
        };
        s.push_str(&format!(", seed={}", self.seed));
        if self.zero_kappa {
            s.push_str(", projected=true");
        }
        s
    }

    /// Parse the flat key-value block. Entries may be separated by commas
    /// or newlines; keys are `law, d, seed` plus the law's parameters and
    /// the optional `projected` flag.
    pub fn parse_spec(text: &str) -> Result<Self, LawError> {
        let mut kv: HashMap<&str, &str> = HashMap::new();
        for raw in text.split([',', '\n']) {
            let item = raw.trim();
            if item.is_empty() || item.starts_with('#') {
                continue;
            }
            let (k, v) = item.split_once('=').ok_or_else(|| LawError::Parse {
                message: format!("expected key=value, got `{item}`"),
            })?;
            kv.insert(k.trim(), v.trim());
        }
        let law_name = kv.get("law").copied().ok_or_else(|| LawError::Parse {
            message: String::from("missing `law` key"),
        })?;
        let num = |key: &str| -> Result<f64, LawError> {
            let raw = kv.get(key).copied().ok_or_else(|| LawError::Parse {
                message: format!("missing `{key}` for law {law_name}"),
            })?;
            raw.parse::<f64>().map_err(|_| LawError::Parse {
                message: format!("bad number for `{key}`: {raw}"),
            })
        };
        let law = match law_name {
            "homogeneous" => EnvironmentLaw::Homogeneous {
                c: if kv.contains_key("c") { num("c")? } else { 1.0 },
            },
            "uniform_elliptic" => {
                let marginal = match kv.get("marginal").copied().unwrap_or("two_point_sym") {
                    "two_point_sym" => Marginal::TwoPointSym,
                    "uniform_interval" => Marginal::UniformInterval,
                    other => {
                        return Err(LawError::Parse {
                            message: format!("unknown marginal `{other}`"),
                        })
                    }
                };
                EnvironmentLaw::UniformElliptic { delta: num("delta")?, marginal }
            }
            "two_point" => EnvironmentLaw::TwoPoint { p: num("p")?, kappa: num("kappa")? },
            other => {
                return Err(LawError::Parse { message: format!("unknown law `{other}`") })
            }
        };
        let d = num("d")? as usize;
        let seed = kv
            .get("seed")
            .copied()
            .unwrap_or("0")
            .parse::<u64>()
            .map_err(|_| LawError::Parse { message: String::from("bad `seed`") })?;
        let field = ConductanceField::new(law, d, seed)?;
        match kv.get("projected").copied() {
            Some("true") => field.zero_kappa_projection(),
            Some("false") | None => Ok(field),
            Some(other) => Err(LawError::Parse {
                message: format!("bad `projected` flag: {other}"),
            }),
        }
    }
}
