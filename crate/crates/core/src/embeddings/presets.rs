use num_complex::Complex64;
use serde::Serialize;

use super::{
    build_hilbert_retarded, build_keldysh_pseudomode, build_namba_keldysh, build_pure_state,
    strong_damping_reduce, ExtendedGenerator, Variant,
};
use crate::correlator::{bose, ri_decompose, BasisTag, BrownianParams, CorrelatorModel, Regime};
use crate::error::{Error, Result};
use crate::liouville::{FockConvention, SystemSpec};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PresetInfo {
    pub id: &'static str,
    pub variant: Variant,
    pub regime: Option<Regime>,
    pub description: &'static str,
}

const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        id: "pseudomode-ex1",
        variant: Variant::KeldyshPseudomode,
        regime: Some(Regime::QuasiThermal),
        description: "Lindblad pseudomode: n_ref = n_beta, Hamiltonian coupling c0/sqrt(2 zeta) S (a + a^dag)",
    },
    PresetInfo {
        id: "heom-stable-eq27",
        variant: Variant::KeldyshPseudomode,
        regime: None,
        description: "zero-reference pseudomode frame with coth/tanh split couplings (stable under truncation)",
    },
    PresetInfo {
        id: "liu14-A4",
        variant: Variant::PureState,
        regime: Some(Regime::Classical),
        description: "pure-state frame, delta = lambda = sqrt2, unnormalized Fock basis a|n) = n|n-1)",
    },
    PresetInfo {
        id: "heom-normalized",
        variant: Variant::PureState,
        regime: None,
        description: "pure-state frame for c2 = 0 with delta = sqrt(2 c1), lambda = sqrt(2 c1*)",
    },
    PresetInfo {
        id: "heom-conventional",
        variant: Variant::PureState,
        regime: Some(Regime::Debye),
        description: "one-sided strong-damping hierarchy for the Debye correlator, delta = sqrt2",
    },
    PresetInfo {
        id: "hilbert-classical-li20",
        variant: Variant::HilbertRetarded,
        regime: Some(Regime::ClassicalHighTemperature),
        description: "retarded frame in the position/momentum basis, b|m,n) = -m|m-1,n), a|m,n) = |m,n-1)",
    },
    PresetInfo {
        id: "namba-keldysh-eq42",
        variant: Variant::HilbertRetarded,
        regime: Some(Regime::ClassicalHighTemperature),
        description: "Bogoliubov-rotated classical retarded frame, unnormalized basis a|n) = n|n-1)",
    },
    PresetInfo {
        id: "hilbert-expdiag",
        variant: Variant::HilbertRetarded,
        regime: None,
        description: "retarded frame with diagonal mode propagator",
    },
    PresetInfo {
        id: "hilbert-phasespace",
        variant: Variant::HilbertRetarded,
        regime: None,
        description: "retarded frame with phase-space mode propagator",
    },
];

pub fn presets() -> &'static [PresetInfo] {
    PRESETS
}

pub fn preset_ids() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.id).collect()
}

fn require_regime(model: &CorrelatorModel, regime: Regime, id: &str) -> Result<BrownianParams> {
    let prov = model.provenance.as_ref().ok_or(Error::MissingProvenance)?;
    if prov.regime != regime {
        return Err(Error::InvalidParams(format!("preset {id} needs a {regime:?} bath, got {:?}", prov.regime)));
    }
    Ok(prov.params)
}

fn single_pair(model: &CorrelatorModel, id: &str) -> Result<crate::correlator::DampedPair> {
    match model.pairs.as_slice() {
        [p] => Ok(*p),
        ps => Err(Error::InvalidParams(format!("preset {id} needs a single-pair bath, got {}", ps.len()))),
    }
}

pub fn build_preset(id: &str, sys: &SystemSpec, model: &CorrelatorModel, n_f: usize) -> Result<ExtendedGenerator> {
    let sqrt2 = Complex64::from(2f64.sqrt());
    let mut g = match id {
        "pseudomode-ex1" => {
            let p = require_regime(model, Regime::QuasiThermal, id)?;
            let pair = single_pair(model, id)?;
            let n = bose(p.beta, pair.zeta);
            let g = Complex64::from((p.c0 * p.c0 / (2.0 * pair.zeta)).sqrt());
            build_keldysh_pseudomode(sys, model, n, g, g, n_f)?
        }
        "heom-stable-eq27" => {
            let pair = single_pair(model, id)?;
            let p = model.provenance.as_ref().ok_or(Error::MissingProvenance)?.params;
            let w = p.omega0;
            let coth = if p.beta.is_infinite() { 1.0 } else { 1.0 / (p.beta * w / 2.0).tanh() };
            let d = Complex64::from((p.c0 * p.c0 / (2.0 * w) * coth).sqrt());
            build_keldysh_pseudomode(sys, model, 0.0, d, (pair.c1.conj() + pair.c2) / d, n_f)?
        }
        "liu14-A4" => {
            require_regime(model, Regime::Classical, id)?;
            build_pure_state(sys, model, sqrt2, sqrt2, n_f)?.with_conventions(&[FockConvention::UnnormPlain])?
        }
        "heom-normalized" => {
            let pair = single_pair(model, id)?;
            if pair.c2.norm() > 1e-14 * pair.c1.norm() {
                return Err(Error::InvalidParams(format!("preset {id} needs c2 = 0, got {}", pair.c2)));
            }
            build_pure_state(sys, model, (2.0 * pair.c1).sqrt(), (2.0 * pair.c1.conj()).sqrt(), n_f)?
        }
        "heom-conventional" => {
            require_regime(model, Regime::Debye, id)?;
            strong_damping_reduce(sys, model, sqrt2, n_f)?
        }
        "hilbert-classical-li20" => {
            require_regime(model, Regime::ClassicalHighTemperature, id)?;
            let d = ri_decompose(model, BasisTag::ClassicalQP)?;
            build_hilbert_retarded(sys, &d, &[n_f, n_f])?
                .with_conventions(&[FockConvention::UnnormShift, FockConvention::UnnormLeftSign])?
        }
        "namba-keldysh-eq42" => {
            let p = require_regime(model, Regime::ClassicalHighTemperature, id)?;
            build_namba_keldysh(sys, &p, n_f)?
                .with_conventions(&[FockConvention::UnnormPlain, FockConvention::UnnormPlain])?
        }
        "hilbert-expdiag" => {
            single_pair(model, id)?;
            build_hilbert_retarded(sys, &ri_decompose(model, BasisTag::ExpDiagonal)?, &[n_f, n_f])?
        }
        "hilbert-phasespace" => {
            single_pair(model, id)?;
            build_hilbert_retarded(sys, &ri_decompose(model, BasisTag::PhaseSpace)?, &[n_f, n_f])?
        }
        _ => return Err(Error::InvalidParams(format!("unknown preset {id:?}; known: {:?}", preset_ids()))),
    };
    g.frame_tag = format!("{id}: {}", g.frame_tag);
    Ok(g)
}
