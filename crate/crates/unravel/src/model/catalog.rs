//! Catalog of concrete systems.
//!
//! Basis orderings are fixed here once and used everywhere: two-level (g, e);
//! three-level (g, e, r); ion trap Fock-major (n, atom) with atom (g, e).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hilbert::{tensor_product, Operator};
use crate::C64;

use super::{JumpChannel, OpenSystem, TruncationGuard};

fn rc(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn sigma_minus() -> Operator {
    Operator::ketbra(2, 0, 1)
}

pub fn sigma_plus() -> Operator {
    Operator::ketbra(2, 1, 0)
}

pub fn sigma_z() -> Operator {
    Operator::ketbra(2, 1, 1).sub(&Operator::ketbra(2, 0, 0))
}

/// Fock-space lowering operator with cutoff: a|n> = sqrt(n)|n-1>.
pub fn lowering(dim: usize) -> Operator {
    Operator::from_fn(dim, |i, j| {
        if j == i + 1 {
            rc((j as f64).sqrt())
        } else {
            rc(0.0)
        }
    })
}

pub fn number_operator(dim: usize) -> Operator {
    Operator::from_fn(dim, |i, j| if i == j { rc(i as f64) } else { rc(0.0) })
}

/// Driven, radiatively damped two-level atom in the rotating frame.
/// Basis (g, e); H = -Delta|e><e| - (Omega/2)(sigma+ + sigma-);
/// one decay channel (Gamma, sigma-).
pub fn build_two_level(rabi: f64, detuning: f64, decay: f64) -> OpenSystem {
    assert!(decay >= 0.0);
    let h = Operator::ketbra(2, 1, 1)
        .scale(rc(-detuning))
        .add(&sigma_plus().add(&sigma_minus()).scale(rc(-rabi / 2.0)));
    OpenSystem::new(h, vec![JumpChannel::new("decay", decay, sigma_minus())])
}

/// Stationary excited population of the driven two-level atom.
pub fn two_level_stationary_pee(rabi: f64, detuning: f64, decay: f64) -> f64 {
    let s = rabi * rabi / 4.0;
    s / (detuning * detuning + decay * decay / 4.0 + 2.0 * s)
}

/// V-scheme three-level atom, basis (g, e, r): a strong transition g-e and a
/// weak metastable transition g-r, each with its own drive, detuning and
/// recycling channel back to g.
pub fn build_three_level(
    rabi_s: f64,
    rabi_w: f64,
    detuning_s: f64,
    detuning_w: f64,
    decay_s: f64,
    decay_w: f64,
) -> OpenSystem {
    assert!(decay_s >= 0.0 && decay_w >= 0.0);
    let mut h = Operator::zeros(3);
    h = h.add(&Operator::ketbra(3, 1, 1).scale(rc(-detuning_s)));
    h = h.add(&Operator::ketbra(3, 2, 2).scale(rc(-detuning_w)));
    h = h.add(
        &Operator::ketbra(3, 1, 0)
            .add(&Operator::ketbra(3, 0, 1))
            .scale(rc(-rabi_s / 2.0)),
    );
    h = h.add(
        &Operator::ketbra(3, 2, 0)
            .add(&Operator::ketbra(3, 0, 2))
            .scale(rc(-rabi_w / 2.0)),
    );
    OpenSystem::new(
        h,
        vec![
            JumpChannel::new("s", decay_s, Operator::ketbra(3, 0, 1)),
            JumpChannel::new("w", decay_w, Operator::ketbra(3, 0, 2)),
        ],
    )
}

/// Two-level ion in a harmonic trap at the node of a standing wave,
/// Lamb-Dicke coupling to the motion. Ordering: Fock-major, (n, atom) with
/// atom basis (g, e); dim = 2(n_max + 1).
///
/// H = nu a^dag a + (-Delta/2) sigma_z - (Omega/2) eta (sigma+ + sigma-)(a + a^dag),
/// with the coupling restricted to sigma+ a + a^dag sigma- when `rwa` is set.
/// One decay channel (Gamma, I (x) sigma-). A Fock-truncation guard watches
/// the top two motional levels at the 1e-4 threshold.
pub fn build_jcm_ion(
    trap_freq: f64,
    detuning: f64,
    rabi: f64,
    lamb_dicke: f64,
    decay: f64,
    n_max: usize,
    rwa: bool,
) -> OpenSystem {
    assert!(n_max >= 1, "need at least two Fock levels");
    assert!(lamb_dicke >= 0.0);
    assert!(decay >= 0.0);
    let dim_f = n_max + 1;
    let a = lowering(dim_f);
    let id_f = Operator::identity(dim_f);
    let id_a = Operator::identity(2);
    let g2 = rabi / 2.0 * lamb_dicke;

    let mut h = tensor_product(&number_operator(dim_f), &id_a).scale(rc(trap_freq));
    h = h.add(&tensor_product(&id_f, &sigma_z()).scale(rc(-detuning / 2.0)));
    let coupling = if rwa {
        tensor_product(&a, &sigma_plus()).add(&tensor_product(&a.dagger(), &sigma_minus()))
    } else {
        tensor_product(
            &a.add(&a.dagger()),
            &sigma_plus().add(&sigma_minus()),
        )
    };
    h = h.add(&coupling.scale(rc(-g2)));

    let channel = JumpChannel::new("decay", decay, tensor_product(&id_f, &sigma_minus()));
    let mut guard_indices = Vec::new();
    for n in [n_max - 1, n_max] {
        for s in 0..2 {
            guard_indices.push(n * 2 + s);
        }
    }
    OpenSystem::new(h, vec![channel]).with_guard(TruncationGuard {
        indices: guard_indices,
        threshold: 1e-4,
    })
}

/// Radiatively decaying qubit, basis (0, 1): H = 0, one channel
/// (Gamma, |0><1|).
pub fn build_decaying_qubit(decay: f64) -> OpenSystem {
    assert!(decay >= 0.0);
    OpenSystem::new(
        Operator::zeros(2),
        vec![JumpChannel::new("decay", decay, Operator::ketbra(2, 0, 1))],
    )
}

/// Parameter names required by each named model, for config validation.
pub fn model_parameter_names(name: &str) -> Option<&'static [&'static str]> {
    match name {
        "two_level" => Some(&["rabi", "detuning", "decay"]),
        "three_level" => Some(&[
            "rabi_s",
            "rabi_w",
            "detuning_s",
            "detuning_w",
            "decay_s",
            "decay_w",
        ]),
        "jcm_ion" => Some(&[
            "trap_freq",
            "detuning",
            "rabi",
            "lamb_dicke",
            "decay",
            "n_max",
            "rwa",
        ]),
        "decaying_qubit" => Some(&["decay"]),
        _ => None,
    }
}

/// Build a catalog model from a name and a flat parameter map; unknown names,
/// unknown parameters, missing parameters and negative rates are rejected.
pub fn build_model_by_name(name: &str, params: &BTreeMap<String, f64>) -> Result<OpenSystem> {
    let required = model_parameter_names(name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown model name `{name}`")))?;
    for key in params.keys() {
        if !required.contains(&key.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "unknown parameter `{key}` for model `{name}`"
            )));
        }
    }
    let get = |key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("missing parameter `{key}` for model `{name}`")))
    };
    let rate = |key: &str| -> Result<f64> {
        let v = get(key)?;
        if v < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "rate `{key}` must be nonnegative, got {v}"
            )));
        }
        Ok(v)
    };
    match name {
        "two_level" => Ok(build_two_level(get("rabi")?, get("detuning")?, rate("decay")?)),
        "three_level" => Ok(build_three_level(
            get("rabi_s")?,
            get("rabi_w")?,
            get("detuning_s")?,
            get("detuning_w")?,
            rate("decay_s")?,
            rate("decay_w")?,
        )),
        "jcm_ion" => {
            let n_max_f = get("n_max")?;
            if n_max_f < 1.0 || n_max_f.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "n_max must be a positive integer, got {n_max_f}"
                )));
            }
            let rwa_f = get("rwa")?;
            if rwa_f != 0.0 && rwa_f != 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "rwa must be 0 or 1, got {rwa_f}"
                )));
            }
            Ok(build_jcm_ion(
                get("trap_freq")?,
                get("detuning")?,
                get("rabi")?,
                rate("lamb_dicke")?,
                rate("decay")?,
                n_max_f as usize,
                rwa_f == 1.0,
            ))
        }
        "decaying_qubit" => Ok(build_decaying_qubit(rate("decay")?)),
        _ => unreachable!(),
    }
}
