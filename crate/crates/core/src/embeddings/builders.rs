use nalgebra::DVector;
use num_complex::Complex64;

use super::triplet::EmbeddingTriplet;
use super::{
    check_nonzero, check_truncation, tensor_diag, vacuum_dm, vacuum_ket, ExtendedGenerator,
    ExtractionRule, FrameParams, InjectionRule, Variant,
};
use crate::correlator::{BrownianParams, CorrelatorModel, DampedPair, RiDecomposition};
use crate::error::{Error, Result};
use crate::liouville::{
    keldysh_rotate, ladder, scale, sparse_zeros, to_sparse, CMat, FockConvention, Layout, Sparse,
    SystemSpec,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const FACTORIZATION_TOL: f64 = 1e-10;

/// Sum of scaled sparse terms.
struct Acc(Sparse);

impl Acc {
    fn new(n: usize) -> Self {
        Self(sparse_zeros(n, n))
    }

    fn add(&mut self, c: Complex64, m: &Sparse) {
        if c != Complex64::ZERO {
            self.0 = &self.0 + &scale(m, c);
        }
    }
}

struct Ops {
    lay: Layout,
    a: Vec<Sparse>,
    a_dag: Vec<Sparse>,
}

impl Ops {
    fn new(dim_s: usize, n_f: &[usize], two_sided: bool) -> Result<Self> {
        let lay = Layout { dim_s, mode_dims: n_f.to_vec(), two_sided };
        let mut a = Vec::new();
        let mut a_dag = Vec::new();
        for (k, &n) in n_f.iter().enumerate() {
            let l = ladder(n, FockConvention::Normalized)?;
            a.push(lay.mode_op(&lay.mode_local(k, &l.a)));
            a_dag.push(lay.mode_op(&lay.mode_local(k, &l.a_dag)));
        }
        Ok(Self { lay, a, a_dag })
    }

    fn n(&self) -> usize {
        self.lay.shape().flat()
    }

    fn left(&self, op: &Sparse) -> Sparse {
        self.lay.left(op).expect("row-space operator")
    }

    /// Right lift of a system operator (column space differs for one-sided layouts).
    fn right_sys(&self, s: &CMat) -> Sparse {
        let op = if self.lay.two_sided { self.lay.sys_op(s) } else { to_sparse(s) };
        self.lay.right(&op).expect("column-space operator")
    }

    fn right(&self, op: &Sparse) -> Sparse {
        self.lay.right(op).expect("two-sided layout")
    }

    fn system_part(&self, sys: &SystemSpec) -> (Acc, Sparse, Sparse) {
        let mut acc = Acc::new(self.n());
        acc.add(-I, &self.left(&self.lay.sys_op(&sys.hamiltonian)));
        acc.add(I, &self.right_sys(&sys.hamiltonian));
        let sl = self.left(&self.lay.sys_op(&sys.coupling));
        let sr = self.right_sys(&sys.coupling);
        let (sc, sq) = keldysh_rotate(&sl, &sr);
        (acc, sc, sq)
    }
}

fn check_triplet(t: &EmbeddingTriplet) -> Result<()> {
    let r = t.factorization_residual(&t.residual_grid());
    if !(r < FACTORIZATION_TOL) {
        return Err(Error::InvalidParams(format!("factorization residual {r:.3e} exceeds tolerance")));
    }
    Ok(())
}

fn decoupled(sys: &SystemSpec, model: &CorrelatorModel) -> bool {
    sys.is_decoupled() || model.is_zero()
}

/// Lindblad pseudomode frame: thermal reference occupation `n_ref`, one mode per pair.
pub fn build_keldysh_pseudomode(
    sys: &SystemSpec,
    model: &CorrelatorModel,
    n_ref: f64,
    delta: Complex64,
    lambda: Complex64,
    n_f: usize,
) -> Result<ExtendedGenerator> {
    check_truncation(n_f)?;
    check_nonzero("delta", delta)?;
    check_nonzero("lambda", lambda)?;
    if !(n_ref >= 0.0) || !n_ref.is_finite() {
        return Err(Error::InvalidParams(format!("n_ref must be >= 0, got {n_ref}")));
    }
    let k = model.pairs.len();
    let ops = Ops::new(sys.dim(), &vec![n_f; k], true)?;
    let (mut acc, sc, sq) = ops.system_part(sys);
    let mut simplified = true;
    for (j, pair) in model.pairs.iter().enumerate() {
        let t = EmbeddingTriplet::keldysh(*pair, delta, lambda, n_ref);
        check_triplet(&t)?;
        let (mut u, mut v) = (t.u_dagger, t.v);
        let x = pair.c1.conj() + pair.c2;
        let scale_x = x.norm().max(1.0);
        if x.im.abs() <= 1e-12 * scale_x
            && ((2.0 * n_ref + 1.0) * delta * lambda - x).norm() <= 1e-12 * scale_x
        {
            u[(0, 1)] = Complex64::ZERO;
            v[(1, 0)] = Complex64::ZERO;
        } else {
            simplified = false;
        }
        let (a, ad) = (&ops.a[j], &ops.a_dag[j]);
        let (al, ar) = (ops.left(a), ops.right(a));
        let (adl, adr) = (ops.left(ad), ops.right(ad));
        let num = ad * a;
        let anti = a * ad;
        // bare mode: -i zeta [a^dag a, .]
        acc.add(-I * pair.zeta, &ops.left(&num));
        acc.add(I * pair.zeta, &ops.right(&num));
        let g = pair.gamma0;
        if g > 0.0 {
            let up = g * (n_ref + 1.0);
            acc.add((2.0 * up).into(), &(&al * &adr));
            acc.add((-up).into(), &ops.left(&num));
            acc.add((-up).into(), &ops.right(&num));
            let dn = g * n_ref;
            if dn > 0.0 {
                acc.add((2.0 * dn).into(), &(&adl * &ar));
                acc.add((-dn).into(), &ops.left(&anti));
                acc.add((-dn).into(), &ops.right(&anti));
            }
        }
        let (a_c, a_q) = keldysh_rotate(&al, &ar);
        let (ad_c, ad_q) = keldysh_rotate(&adl, &adr);
        // -i ( [Sq Sc] U^dag [a_c; a_q] + [a_c^dag a_q^dag] V [Sq; Sc] )
        acc.add(-I * u[(0, 0)], &(&sq * &a_c));
        acc.add(-I * u[(0, 1)], &(&sq * &a_q));
        acc.add(-I * u[(1, 0)], &(&sc * &a_c));
        acc.add(-I * u[(1, 1)], &(&sc * &a_q));
        acc.add(-I * v[(0, 0)], &(&ad_c * &sq));
        acc.add(-I * v[(0, 1)], &(&ad_c * &sc));
        acc.add(-I * v[(1, 0)], &(&ad_q * &sq));
        acc.add(-I * v[(1, 1)], &(&ad_q * &sc));
    }
    let m = ops.lay.mode_space();
    let occ = vec![n_ref; k];
    let tag = if simplified && k > 0 { "keldysh-pseudomode (simplified coupling)" } else { "keldysh-pseudomode" };
    Ok(ExtendedGenerator {
        variant: Variant::KeldyshPseudomode,
        layout: ops.lay.clone(),
        rate: acc.0,
        injection: InjectionRule::TensorThermal(occ.clone()),
        extraction: ExtractionRule::PartialTrace,
        xi: tensor_diag(&vec![n_f; k], &occ),
        ext: CMat::identity(m, m),
        conventions: vec![FockConvention::Normalized; k],
        frame_tag: tag.into(),
        params: FrameParams {
            delta: Some(delta),
            lambda: Some(lambda),
            n_ref: Some(n_ref),
            n_f: vec![n_f; k],
            ..Default::default()
        },
        decoupled: decoupled(sys, model),
    })
}

/// One decaying channel of a pure-state mode: rate `z` and the weights of the
/// quantum and classical system superoperators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub rate: Complex64,
    pub a: Complex64,
    pub b: Complex64,
}

impl Sector {
    /// Sector of a single real-rate term `c e^{-g t}` of a correlator.
    pub fn real_rate(c: Complex64, gamma: f64) -> Self {
        Self { rate: gamma.into(), a: c + c.conj(), b: c - c.conj() }
    }
}

/// A pure-state mode acting from the left (`a rho`, `a^dag rho`) and the right
/// (`rho a^dag`, `rho a`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureStateMode {
    pub left: Sector,
    pub right: Sector,
}

impl PureStateMode {
    pub fn from_pair(p: &DampedPair) -> Self {
        let (c1, c2) = (p.c1, p.c2);
        Self {
            left: Sector { rate: p.z1(), a: c1 + c2.conj(), b: c1 - c2.conj() },
            right: Sector { rate: p.z2(), a: c2 + c1.conj(), b: c2 - c1.conj() },
        }
    }

    /// Single mode for the overdamped Brownian correlator: the slow branch on the
    /// left, the fast branch on the right.
    pub fn overdamped(params: &BrownianParams) -> Result<Self> {
        let m = crate::correlator::overdamped_brownian(params)?;
        let (slow, fast) = (m.pairs[0], m.pairs[1]);
        Ok(Self {
            left: Sector::real_rate(slow.c1, slow.gamma0),
            right: Sector::real_rate(fast.c1, fast.gamma0),
        })
    }
}

pub fn build_pure_state(
    sys: &SystemSpec,
    model: &CorrelatorModel,
    delta: Complex64,
    lambda: Complex64,
    n_f: usize,
) -> Result<ExtendedGenerator> {
    for p in &model.pairs {
        check_nonzero("delta", delta)?;
        check_nonzero("lambda", lambda)?;
        check_triplet(&EmbeddingTriplet::pure_state(*p, delta, lambda))?;
    }
    let modes: Vec<PureStateMode> = model.pairs.iter().map(PureStateMode::from_pair).collect();
    let mut g = build_pure_state_sectors(sys, &modes, delta, lambda, n_f)?;
    g.decoupled = decoupled(sys, model);
    Ok(g)
}

pub fn build_pure_state_sectors(
    sys: &SystemSpec,
    modes: &[PureStateMode],
    delta: Complex64,
    lambda: Complex64,
    n_f: usize,
) -> Result<ExtendedGenerator> {
    check_truncation(n_f)?;
    check_nonzero("delta", delta)?;
    check_nonzero("lambda", lambda)?;
    let k = modes.len();
    let ops = Ops::new(sys.dim(), &vec![n_f; k], true)?;
    let (mut acc, sc, sq) = ops.system_part(sys);
    for (j, md) in modes.iter().enumerate() {
        let (a, ad) = (&ops.a[j], &ops.a_dag[j]);
        let num = ad * a;
        acc.add(-md.left.rate, &ops.left(&num));
        acc.add(-md.right.rate, &ops.right(&num));
        let (al, adl, adr, ar) = (ops.left(a), ops.left(ad), ops.right(ad), ops.right(a));
        acc.add(-I * delta, &(&sq * &al));
        acc.add(-I * md.left.a / delta, &(&sq * &adl));
        acc.add(-I * md.left.b / delta, &(&sc * &adl));
        acc.add(-I * lambda, &(&sq * &adr));
        acc.add(-I * md.right.a / lambda, &(&sq * &ar));
        acc.add(-I * md.right.b / lambda, &(&sc * &ar));
    }
    let m = ops.lay.mode_space();
    let zero_bath = modes
        .iter()
        .all(|md| md.left.a == Complex64::ZERO && md.left.b == Complex64::ZERO && md.right.a == Complex64::ZERO && md.right.b == Complex64::ZERO);
    Ok(ExtendedGenerator {
        variant: Variant::PureState,
        layout: ops.lay.clone(),
        rate: acc.0,
        injection: InjectionRule::TensorVacuumDM,
        extraction: ExtractionRule::VacuumSandwich,
        xi: vacuum_dm(m),
        ext: vacuum_dm(m),
        conventions: vec![FockConvention::Normalized; k],
        frame_tag: "pure-state".into(),
        params: FrameParams {
            delta: Some(delta),
            lambda: Some(lambda),
            n_f: vec![n_f; k],
            ..Default::default()
        },
        decoupled: sys.is_decoupled() || zero_bath,
    })
}

/// One-sided frame keeping only the left sector of a single pair. For `zeta = 0`
/// both sectors share one rate and are folded into the left mode exactly.
pub fn strong_damping_reduce(
    sys: &SystemSpec,
    model: &CorrelatorModel,
    delta: Complex64,
    n_f: usize,
) -> Result<ExtendedGenerator> {
    let [p] = model.pairs.as_slice() else {
        return Err(Error::InvalidParams(format!(
            "strong-damping reduction needs one pair, got {}",
            model.pairs.len()
        )));
    };
    let md = PureStateMode::from_pair(p);
    let sector = if p.zeta == 0.0 {
        Sector { rate: md.left.rate, a: md.left.a + md.right.a, b: md.left.b + md.right.b }
    } else {
        md.left
    };
    let mut g = strong_damping_reduce_sector(sys, sector, delta, n_f)?;
    g.decoupled = decoupled(sys, model);
    if p.zeta == 0.0 {
        g.frame_tag = "strong-damping-reduced (folded zero-frequency pair)".into();
    }
    Ok(g)
}

pub fn strong_damping_reduce_sector(
    sys: &SystemSpec,
    sector: Sector,
    delta: Complex64,
    n_f: usize,
) -> Result<ExtendedGenerator> {
    check_truncation(n_f)?;
    check_nonzero("delta", delta)?;
    let ops = Ops::new(sys.dim(), &[n_f], false)?;
    let (mut acc, sc, sq) = ops.system_part(sys);
    let (a, ad) = (&ops.a[0], &ops.a_dag[0]);
    acc.add(-sector.rate, &ops.left(&(ad * a)));
    let (al, adl) = (ops.left(a), ops.left(ad));
    acc.add(-I * delta, &(&sq * &al));
    acc.add(-I * sector.a / delta, &(&sq * &adl));
    acc.add(-I * sector.b / delta, &(&sc * &adl));
    Ok(ExtendedGenerator {
        variant: Variant::PureState,
        layout: ops.lay.clone(),
        rate: acc.0,
        injection: InjectionRule::TensorVacuumKet,
        extraction: ExtractionRule::LeftVacuumProject,
        xi: vacuum_ket(n_f),
        ext: vacuum_ket(n_f),
        conventions: vec![FockConvention::Normalized],
        frame_tag: "strong-damping-reduced".into(),
        params: FrameParams { delta: Some(delta), n_f: vec![n_f], ..Default::default() },
        decoupled: sys.is_decoupled() || (sector.a == Complex64::ZERO && sector.b == Complex64::ZERO),
    })
}

/// Retarded-only frame from `(kappa, E, eta, eta')`, one mode per component.
pub fn build_hilbert_retarded(
    sys: &SystemSpec,
    decomp: &RiDecomposition,
    n_f: &[usize],
) -> Result<ExtendedGenerator> {
    let k = decomp.dim();
    if n_f.len() != k {
        return Err(Error::DimensionMismatch(format!("{} truncations for {k} components", n_f.len())));
    }
    for &n in n_f {
        check_truncation(n)?;
    }
    let ops = Ops::new(sys.dim(), n_f, false)?;
    let (mut acc, _, _) = ops.system_part(sys);
    let n_row = ops.lay.shape().rows;
    let mut mode_h = sparse_zeros(n_row, n_row);
    let mut o1 = sparse_zeros(n_row, n_row);
    let mut o2 = sparse_zeros(n_row, n_row);
    for i in 0..k {
        for j in 0..k {
            let e = decomp.e[(i, j)];
            if e != Complex64::ZERO {
                mode_h = &mode_h + &scale(&(&ops.a_dag[i] * &ops.a[j]), e);
            }
        }
        o1 = &o1 + &(&scale(&ops.a[i], decomp.kappa[i].conj()) + &scale(&ops.a_dag[i], decomp.eta[i]));
        o2 = &o2 + &scale(&ops.a_dag[i], decomp.eta_prime[i]);
    }
    let s_row = ops.lay.sys_op(&sys.coupling);
    let s_right = ops.right_sys(&sys.coupling);
    acc.add(-I, &ops.left(&mode_h));
    // -i [S, O1 rho] + {S, O2 rho}
    acc.add(-I, &ops.left(&(&s_row * &o1)));
    acc.add(I, &(&s_right * &ops.left(&o1)));
    acc.add(Complex64::ONE, &ops.left(&(&s_row * &o2)));
    acc.add(Complex64::ONE, &(&s_right * &ops.left(&o2)));
    let m = ops.lay.mode_space();
    let zero = decomp.kappa.iter().chain(decomp.eta.iter()).chain(decomp.eta_prime.iter()).all(|z| *z == Complex64::ZERO);
    Ok(ExtendedGenerator {
        variant: Variant::HilbertRetarded,
        layout: ops.lay.clone(),
        rate: acc.0,
        injection: InjectionRule::TensorVacuumKet,
        extraction: ExtractionRule::LeftVacuumProject,
        xi: vacuum_ket(m),
        ext: vacuum_ket(m),
        conventions: vec![FockConvention::Normalized; k],
        frame_tag: format!("hilbert-retarded ({:?})", decomp.basis_tag),
        params: FrameParams { basis: Some(decomp.basis_tag), n_f: n_f.to_vec(), ..Default::default() },
        decoupled: sys.is_decoupled() || zero,
    })
}

/// Two-mode one-sided frame with the thermal-vacuum extraction
/// `<0| exp((a^2 + b^2)/2)`, built directly for the high-temperature classical
/// correlator.
pub fn build_namba_keldysh(sys: &SystemSpec, params: &BrownianParams, n_f: usize) -> Result<ExtendedGenerator> {
    check_truncation(n_f)?;
    params.validate()?;
    let BrownianParams { c0, omega0: w, gamma0: g, beta } = *params;
    if !beta.is_finite() {
        return Err(Error::InvalidParams("thermal-vacuum frame needs finite beta".into()));
    }
    let ops = Ops::new(sys.dim(), &[n_f, n_f], false)?;
    let (mut acc, _, _) = ops.system_part(sys);
    let (a, ad, b, bd) = (&ops.a[0], &ops.a_dag[0], &ops.a[1], &ops.a_dag[1]);
    let mode = &(&scale(&(&(bd * b) - &(b * b)), (2.0 * g).into()) - &scale(&(ad * b), w.into()))
        + &scale(&(a * bd), w.into());
    acc.add(-Complex64::ONE, &ops.left(&mode));
    let kq = (c0 * c0 / (2.0 * beta * w * w)).sqrt();
    let kp = (beta * c0 * c0 / 8.0).sqrt();
    let s_row = ops.lay.sys_op(&sys.coupling);
    let s_right = ops.right_sys(&sys.coupling);
    let x = ad + a;
    let p = b - bd;
    acc.add(-I * kq, &ops.left(&(&s_row * &x)));
    acc.add(I * kq, &(&s_right * &ops.left(&x)));
    acc.add(kp.into(), &ops.left(&(&s_row * &p)));
    acc.add(kp.into(), &(&s_right * &ops.left(&p)));
    let f: Vec<Complex64> = (0..n_f)
        .map(|n| {
            if n % 2 == 1 {
                return Complex64::ZERO;
            }
            let k = n / 2;
            // sqrt((2k)!) / (2^k k!)
            let lg = 0.5 * ln_factorial(2 * k) - k as f64 * 2f64.ln() - ln_factorial(k);
            lg.exp().into()
        })
        .collect();
    let fv = DVector::from_vec(f);
    let ext = fv.kronecker(&fv);
    let m = n_f * n_f;
    Ok(ExtendedGenerator {
        variant: Variant::HilbertRetarded,
        layout: ops.lay.clone(),
        rate: acc.0,
        injection: InjectionRule::TensorVacuumKet,
        extraction: ExtractionRule::Transformed,
        xi: vacuum_ket(m),
        ext: CMat::from_column_slice(m, 1, ext.as_slice()),
        conventions: vec![FockConvention::Normalized; 2],
        frame_tag: "namba-keldysh (thermal-vacuum extraction)".into(),
        params: FrameParams {
            n_f: vec![n_f, n_f],
            extra: vec![("x_coupling".into(), kq), ("p_coupling".into(), kp)],
            ..Default::default()
        },
        decoupled: sys.is_decoupled() || c0 == 0.0,
    })
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}
