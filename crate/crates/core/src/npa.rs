//! Moment-matrix relaxations of the quantum set and device-independent
//! randomness certificates.
//!
//! Moment variables are expectations of words over outcome-`+1` projectors,
//! one projector per setting and party; `+-1` observables are recovered as
//! `2 P - 1`. Words are reduced with projector idempotence, A-operators
//! commute past B-operators, and a word is identified with its adjoint
//! (the moment matrix is real symmetric). The hierarchy levels are
//!
//! - `Q1`: identity, all `P^A_x`, all `P^B_y`;
//! - `1+AB`: Q1 plus all products `P^A_x P^B_y`;
//! - `Q2`: 1+AB plus all ordered same-party pairs.
//!
//! Two certificate modes are provided. [`max_prob_given_violation`] bounds
//! `p(ab|xy)` over all moment matrices with a prescribed Bell value, one SDP
//! per outcome pair. [`max_guess_full_statistics`] bounds the probability
//! that an adversary holding a purification guesses the outcome pair, via
//! four subnormalized moment blocks (one per adversary outcome) whose
//! behaviors sum to the observed table.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::bell::{Behavior, BellCoefficients};
use crate::error::{Error, Result};
use crate::sdp::{
    Constraint, SdpProblem, SdpSolution, Sense, SolveOptions, SolverStatus, feasibility_certificate,
    solve,
};

/// No-signaling tolerance accepted by the certifiers.
pub const NO_SIGNALING_TOL: f64 = 1e-8;

/// Relaxation tightness level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NpaLevel {
    /// Identity and single projectors.
    Q1,
    /// Q1 plus cross-party products.
    OnePlusAb,
    /// 1+AB plus same-party length-two words.
    Q2,
}

impl NpaLevel {
    fn rank(self) -> u8 {
        match self {
            NpaLevel::Q1 => 0,
            NpaLevel::OnePlusAb => 1,
            NpaLevel::Q2 => 2,
        }
    }

    /// Parses `"q1"`, `"1+ab"`, or `"q2"` (case-insensitive).
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q1" => Ok(NpaLevel::Q1),
            "1+ab" | "q1+ab" | "1ab" => Ok(NpaLevel::OnePlusAb),
            "q2" => Ok(NpaLevel::Q2),
            other => Err(Error::InvalidInput(format!(
                "unknown NPA level '{other}', expected q1, 1+ab, or q2"
            ))),
        }
    }
}

impl std::fmt::Display for NpaLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NpaLevel::Q1 => write!(f, "q1"),
            NpaLevel::OnePlusAb => write!(f, "1+ab"),
            NpaLevel::Q2 => write!(f, "q2"),
        }
    }
}

/// Which data constrains the adversary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// Only the observed value of one Bell functional.
    ViolationOnly,
    /// The complete probability table.
    FullStatistics,
}

impl std::fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintMode::ViolationOnly => write!(f, "violation_only"),
            ConstraintMode::FullStatistics => write!(f, "full_statistics"),
        }
    }
}

/// Two-party binary-outcome measurement scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    /// Alice settings.
    pub n_a: usize,
    /// Bob settings.
    pub n_b: usize,
}

impl Scenario {
    /// Validates the minimum of two settings per party.
    pub fn new(n_a: usize, n_b: usize) -> Result<Self> {
        if n_a < 2 || n_b < 2 {
            return Err(Error::InvalidSettingCount { n: n_a.min(n_b) });
        }
        Ok(Self { n_a, n_b })
    }

    /// Symmetric scenario used by the chained functional.
    pub fn chained(n: usize) -> Result<Self> {
        Self::new(n, n)
    }
}

/// A reduced projector word: an alternating A-part followed by an
/// alternating B-part (operators of different parties commute).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    a: Vec<u8>,
    b: Vec<u8>,
}

impl Word {
    /// The empty word.
    pub fn identity() -> Self {
        Self {
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    fn alice(x: usize) -> Self {
        Self {
            a: vec![x as u8],
            b: Vec::new(),
        }
    }

    fn bob(y: usize) -> Self {
        Self {
            a: Vec::new(),
            b: vec![y as u8],
        }
    }

    fn joint(x: usize, y: usize) -> Self {
        Self {
            a: vec![x as u8],
            b: vec![y as u8],
        }
    }

    /// Whether this is the empty word.
    pub fn is_identity(&self) -> bool {
        self.a.is_empty() && self.b.is_empty()
    }

    /// Reversal of both party words (projectors are Hermitian).
    pub fn adjoint(&self) -> Self {
        Self {
            a: self.a.iter().rev().copied().collect(),
            b: self.b.iter().rev().copied().collect(),
        }
    }

    /// The lexicographically smaller of the word and its adjoint; moments of
    /// a word and its adjoint share one real variable.
    pub fn canonical(&self) -> Self {
        let adj = self.adjoint();
        if *self <= adj { self.clone() } else { adj }
    }

    /// Alice part length.
    pub fn len_a(&self) -> usize {
        self.a.len()
    }

    /// Bob part length.
    pub fn len_b(&self) -> usize {
        self.b.len()
    }
}

fn reduced_concat(rev_left: impl Iterator<Item = u8>, right: &[u8]) -> Vec<u8> {
    let mut out: Vec<u8> = Vec::new();
    for c in rev_left.chain(right.iter().copied()) {
        if out.last() != Some(&c) {
            out.push(c);
        }
    }
    out
}

/// Reduced product `w_i^dag w_j`.
pub fn dagger_product(wi: &Word, wj: &Word) -> Word {
    Word {
        a: reduced_concat(wi.a.iter().rev().copied(), &wj.a),
        b: reduced_concat(wi.b.iter().rev().copied(), &wj.b),
    }
}

/// Ordered word basis of one hierarchy level.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    /// Level the basis encodes.
    pub level: NpaLevel,
    /// Scenario the settings refer to.
    pub scenario: Scenario,
    words: Vec<Word>,
    index: HashMap<Word, usize>,
}

impl MonomialBasis {
    /// Basis size (moment-matrix dimension).
    pub fn len(&self) -> usize {
        self.words.len()
    }

    /// Whether the basis is empty (never true for a valid scenario).
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Word at a basis position.
    pub fn word(&self, i: usize) -> &Word {
        &self.words[i]
    }

    /// Position of a word, if present.
    pub fn position(&self, w: &Word) -> Option<usize> {
        self.index.get(w).copied()
    }
}

/// Enumerates the word basis for a scenario and level. Lower levels are
/// prefixes of higher ones.
pub fn build_basis(s: &Scenario, level: NpaLevel) -> MonomialBasis {
    let mut words = vec![Word::identity()];
    for x in 0..s.n_a {
        words.push(Word::alice(x));
    }
    for y in 0..s.n_b {
        words.push(Word::bob(y));
    }
    if level.rank() >= NpaLevel::OnePlusAb.rank() {
        for x in 0..s.n_a {
            for y in 0..s.n_b {
                words.push(Word::joint(x, y));
            }
        }
    }
    if level.rank() >= NpaLevel::Q2.rank() {
        for x in 0..s.n_a {
            for x2 in 0..s.n_a {
                if x != x2 {
                    words.push(Word {
                        a: vec![x as u8, x2 as u8],
                        b: Vec::new(),
                    });
                }
            }
        }
        for y in 0..s.n_b {
            for y2 in 0..s.n_b {
                if y != y2 {
                    words.push(Word {
                        a: Vec::new(),
                        b: vec![y as u8, y2 as u8],
                    });
                }
            }
        }
    }
    let index = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    MonomialBasis {
        level,
        scenario: *s,
        words,
        index,
    }
}

/// Partition of the upper-triangle entries of one moment block into classes
/// sharing a reduced word.
#[derive(Debug, Clone)]
struct MomentStructure {
    class_of: HashMap<Word, usize>,
    members: Vec<Vec<(usize, usize)>>,
}

impl MomentStructure {
    fn build(basis: &MonomialBasis) -> Self {
        let dim = basis.len();
        let mut class_of: HashMap<Word, usize> = HashMap::new();
        let mut members: Vec<Vec<(usize, usize)>> = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                let w = dagger_product(basis.word(i), basis.word(j)).canonical();
                let id = *class_of.entry(w).or_insert_with(|| {
                    members.push(Vec::new());
                    members.len() - 1
                });
                members[id].push((i, j));
            }
        }
        Self { class_of, members }
    }

    fn representative(&self, w: &Word) -> Option<(usize, usize)> {
        self.class_of
            .get(&w.canonical())
            .map(|&id| self.members[id][0])
    }
}

/// One addend `coeff * Gamma_block[row, col]` of a linear functional.
#[derive(Debug, Clone, Copy)]
pub struct EntryTerm {
    /// Moment block index.
    pub block: usize,
    /// Row of the referenced entry.
    pub row: usize,
    /// Column of the referenced entry.
    pub col: usize,
    /// Coefficient.
    pub coeff: f64,
}

/// Linear functional over moment-matrix entries plus a constant offset.
#[derive(Debug, Clone, Default)]
pub struct LinearCombo {
    /// Entry terms.
    pub terms: Vec<EntryTerm>,
    /// Constant offset.
    pub constant: f64,
}

impl LinearCombo {
    fn push(&mut self, block: usize, entry: (usize, usize), coeff: f64) {
        self.terms.push(EntryTerm {
            block,
            row: entry.0,
            col: entry.1,
            coeff,
        });
    }
}

/// A moment-matrix optimization problem: maximize a linear functional of the
/// blocks subject to entry equalities and positive semidefiniteness.
#[derive(Debug, Clone)]
pub struct MomentProgram {
    /// Word basis shared by all blocks.
    pub basis: MonomialBasis,
    /// Number of moment blocks (1, or 4 for the adversary decomposition).
    pub blocks: usize,
    /// Dimension of each block.
    pub gamma_dim: usize,
    /// Equality constraints as (pattern, value) pairs.
    pub equalities: Vec<(LinearCombo, f64)>,
    /// Objective functional, maximized.
    pub objective: LinearCombo,
}

/// Solved moment program with recomputed residuals.
#[derive(Debug, Clone)]
pub struct MomentSolution {
    /// Primal objective value (including the constant offset).
    pub value: f64,
    /// Dual objective value; a certified upper bound when `dual_residual`
    /// is small.
    pub upper_bound: f64,
    /// Moment blocks.
    pub gamma: Vec<DMatrix<f64>>,
    /// Solver termination state.
    pub status: SolverStatus,
    /// Primal-dual gap.
    pub gap: f64,
    /// Iterations used.
    pub iterations: usize,
    /// Largest equality residual, recomputed.
    pub max_equality_residual: f64,
    /// Dual linear-constraint residual, recomputed.
    pub dual_residual: f64,
}

impl MomentProgram {
    /// Lowers the program to the block SDP standard form.
    pub fn to_sdp(&self) -> Result<SdpProblem> {
        let d = self.gamma_dim;
        let mut objective = vec![DMatrix::<f64>::zeros(d, d); self.blocks];
        for t in &self.objective.terms {
            if t.row == t.col {
                objective[t.block][(t.row, t.col)] += t.coeff;
            } else {
                objective[t.block][(t.row, t.col)] += 0.5 * t.coeff;
                objective[t.block][(t.col, t.row)] += 0.5 * t.coeff;
            }
        }
        let constraints = self
            .equalities
            .iter()
            .map(|(combo, value)| {
                let mut c = Constraint::new(value - combo.constant);
                for t in &combo.terms {
                    c.add_entry(t.block, t.row, t.col, t.coeff);
                }
                c
            })
            .collect();
        SdpProblem::new(
            vec![d; self.blocks],
            objective,
            constraints,
            Sense::Maximize,
        )
    }

    /// Solves the program and recomputes residuals on the result.
    pub fn solve(&self, opts: &SolveOptions) -> Result<MomentSolution> {
        let problem = self.to_sdp()?;
        let sol: SdpSolution = solve(&problem, opts)?;
        let report = feasibility_certificate(&sol, &problem);
        Ok(MomentSolution {
            value: sol.primal_value + self.objective.constant,
            upper_bound: sol.dual_value + self.objective.constant,
            gamma: sol.x.clone(),
            status: sol.status,
            gap: sol.gap,
            iterations: sol.iterations,
            max_equality_residual: report.max_equality_residual,
            dual_residual: report.dual_residual,
        })
    }
}

/// Randomness certificate for one setting pair.
#[derive(Debug, Clone)]
pub struct CertResult {
    /// Certified upper bound on the pair-guessing probability, clamped to
    /// `[1/4, 1]`.
    pub p_guess: f64,
    /// `-log2(p_guess)`.
    pub min_entropy_bits: f64,
    /// Relaxation level used.
    pub level: NpaLevel,
    /// Setting pair the certificate refers to.
    pub setting: (usize, usize),
    /// Constraint mode used.
    pub constraint_mode: ConstraintMode,
    /// Termination state of the decisive solve.
    pub solver_status: SolverStatus,
    /// Primal-dual gap of the decisive solve.
    pub gap: f64,
}

impl CertResult {
    fn from_p_guess(
        p_raw: f64,
        level: NpaLevel,
        setting: (usize, usize),
        mode: ConstraintMode,
        status: SolverStatus,
        gap: f64,
    ) -> Self {
        let p_guess = p_raw.clamp(0.25, 1.0);
        Self {
            p_guess,
            min_entropy_bits: -p_guess.log2(),
            level,
            setting,
            constraint_mode: mode,
            solver_status: status,
            gap,
        }
    }
}

/// Min-entropy in bits, `-log2(p)`.
pub fn min_entropy(p_guess: f64) -> Result<f64> {
    if p_guess <= 0.0 {
        return Err(Error::NonpositiveProbability { p: p_guess });
    }
    Ok(-p_guess.log2())
}

/// The certificate with the least entropy, i.e. the worst case over a set of
/// per-setting results.
pub fn worst_case_entropy(results: &[CertResult]) -> Option<&CertResult> {
    results.iter().min_by(|a, b| {
        a.min_entropy_bits
            .partial_cmp(&b.min_entropy_bits)
            .expect("entropies are finite")
    })
}

/// Identifies which behavior quantity a pinned entry carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentQuantity {
    /// `<P^A_x>`.
    AliceMarginal(usize),
    /// `<P^B_y>`.
    BobMarginal(usize),
    /// `<P^A_x P^B_y>`.
    Joint(usize, usize),
}

/// One pinned moment entry.
#[derive(Debug, Clone, Copy)]
pub struct MomentEquality {
    /// Quantity being pinned.
    pub quantity: MomentQuantity,
    /// Representative entry of the moment class.
    pub entry: (usize, usize),
    /// Pinned value.
    pub value: f64,
}

fn quantity_word(q: MomentQuantity) -> Word {
    match q {
        MomentQuantity::AliceMarginal(x) => Word::alice(x),
        MomentQuantity::BobMarginal(y) => Word::bob(y),
        MomentQuantity::Joint(x, y) => Word::joint(x, y),
    }
}

fn quantity_value(q: MomentQuantity, beh: &Behavior) -> f64 {
    match q {
        MomentQuantity::AliceMarginal(x) => beh.alice_plus(x),
        MomentQuantity::BobMarginal(y) => beh.bob_plus(y),
        MomentQuantity::Joint(x, y) => beh.prob(x, y, 0, 0),
    }
}

fn all_quantities(s: &Scenario) -> Vec<MomentQuantity> {
    let mut qs = Vec::with_capacity(s.n_a + s.n_b + s.n_a * s.n_b);
    for x in 0..s.n_a {
        qs.push(MomentQuantity::AliceMarginal(x));
    }
    for y in 0..s.n_b {
        qs.push(MomentQuantity::BobMarginal(y));
    }
    for x in 0..s.n_a {
        for y in 0..s.n_b {
            qs.push(MomentQuantity::Joint(x, y));
        }
    }
    qs
}

/// The equalities that pin a moment block to an observed behavior:
/// `<P^A_x> = p(+.|x)`, `<P^B_y> = p(.+|y)`, `<P^A_x P^B_y> = p(++|xy)`.
/// Together with normalization these recover all four joint probabilities.
pub fn behavior_constraints(
    basis: &MonomialBasis,
    beh: &Behavior,
) -> Result<Vec<MomentEquality>> {
    if beh.n_alice() != basis.scenario.n_a || beh.n_bob() != basis.scenario.n_b {
        return Err(Error::DimensionMismatch {
            context: format!(
                "behavior is {}x{}, scenario is {}x{}",
                beh.n_alice(),
                beh.n_bob(),
                basis.scenario.n_a,
                basis.scenario.n_b
            ),
        });
    }
    let dev = beh.no_signaling_deviation();
    if dev > NO_SIGNALING_TOL {
        return Err(Error::NoSignalingViolated { max_dev: dev });
    }
    let structure = MomentStructure::build(basis);
    all_quantities(&basis.scenario)
        .into_iter()
        .map(|q| {
            let entry = structure
                .representative(&quantity_word(q))
                .expect("behavior words are present at every level");
            Ok(MomentEquality {
                quantity: q,
                entry,
                value: quantity_value(q, beh),
            })
        })
        .collect()
}

fn push_symmetry_equalities(
    structure: &MomentStructure,
    block: usize,
    equalities: &mut Vec<(LinearCombo, f64)>,
) {
    for members in &structure.members {
        let rep = members[0];
        for &entry in &members[1..] {
            let mut combo = LinearCombo::default();
            combo.push(block, entry, 1.0);
            combo.push(block, rep, -1.0);
            equalities.push((combo, 0.0));
        }
    }
}

/// Adds `sign * p_block(ab|xy)` to a combo, expressed through the block's
/// identity entry, marginal entries, and the joint entry. In a normalized
/// single-block program the identity entry is `(0, 0)` with `Gamma[0,0] = 1`.
fn push_outcome_probability(
    combo: &mut LinearCombo,
    structure: &MomentStructure,
    block: usize,
    target: (usize, usize),
    outcome: (usize, usize),
    sign: f64,
) {
    let (x, y) = target;
    let e_id = (0usize, 0usize);
    let e_ax = structure
        .representative(&Word::alice(x))
        .expect("marginal word present");
    let e_by = structure
        .representative(&Word::bob(y))
        .expect("marginal word present");
    let e_j = structure
        .representative(&Word::joint(x, y))
        .expect("joint word present");
    match outcome {
        (0, 0) => combo.push(block, e_j, sign),
        (0, 1) => {
            combo.push(block, e_ax, sign);
            combo.push(block, e_j, -sign);
        }
        (1, 0) => {
            combo.push(block, e_by, sign);
            combo.push(block, e_j, -sign);
        }
        (1, 1) => {
            combo.push(block, e_id, sign);
            combo.push(block, e_ax, -sign);
            combo.push(block, e_by, -sign);
            combo.push(block, e_j, sign);
        }
        _ => unreachable!("outcomes are binary"),
    }
}

/// Bell functional over one normalized moment block, using
/// `<A_x B_y> = 4 <P_x P_y> - 2 <P_x> - 2 <P_y> + 1`.
fn bell_combo(
    structure: &MomentStructure,
    coeffs: &BellCoefficients,
) -> LinearCombo {
    let mut combo = LinearCombo::default();
    let mut constant = 0.0;
    for (x, y, w) in coeffs.nonzero() {
        let e_ax = structure
            .representative(&Word::alice(x))
            .expect("marginal word present");
        let e_by = structure
            .representative(&Word::bob(y))
            .expect("marginal word present");
        let e_j = structure
            .representative(&Word::joint(x, y))
            .expect("joint word present");
        combo.push(0, e_j, 4.0 * w);
        combo.push(0, e_ax, -2.0 * w);
        combo.push(0, e_by, -2.0 * w);
        constant += w;
    }
    combo.constant = constant;
    combo
}

fn check_target(s: &Scenario, target: (usize, usize)) -> Result<()> {
    if target.0 >= s.n_a || target.1 >= s.n_b {
        return Err(Error::DimensionMismatch {
            context: format!(
                "target setting ({}, {}) outside scenario {}x{}",
                target.0, target.1, s.n_a, s.n_b
            ),
        });
    }
    Ok(())
}

/// Program maximizing the Bell functional over the relaxation; its value is
/// the level's Tsirelson-type bound for the functional.
pub fn max_bell_program(s: &Scenario, coeffs: &BellCoefficients, level: NpaLevel) -> Result<MomentProgram> {
    if coeffs.n_alice() != s.n_a || coeffs.n_bob() != s.n_b {
        return Err(Error::DimensionMismatch {
            context: format!(
                "coefficients are {}x{}, scenario is {}x{}",
                coeffs.n_alice(),
                coeffs.n_bob(),
                s.n_a,
                s.n_b
            ),
        });
    }
    let basis = build_basis(s, level);
    let structure = MomentStructure::build(&basis);
    let mut equalities = Vec::new();
    push_symmetry_equalities(&structure, 0, &mut equalities);
    let mut norm = LinearCombo::default();
    norm.push(0, (0, 0), 1.0);
    equalities.push((norm, 1.0));
    let objective = bell_combo(&structure, coeffs);
    Ok(MomentProgram {
        gamma_dim: basis.len(),
        basis,
        blocks: 1,
        equalities,
        objective,
    })
}

/// Maximum Bell value the relaxation admits.
pub fn relaxation_max_bell(
    s: &Scenario,
    coeffs: &BellCoefficients,
    level: NpaLevel,
    opts: &SolveOptions,
) -> Result<f64> {
    let sol = max_bell_program(s, coeffs, level)?.solve(opts)?;
    Ok(if sol.dual_residual <= 1e-5 {
        sol.value.max(sol.upper_bound)
    } else {
        sol.value
    })
}

/// Program maximizing `p(ab|xy)` subject to the Bell value equalling
/// `observed`, for one outcome pair.
pub fn violation_program(
    s: &Scenario,
    coeffs: &BellCoefficients,
    observed: f64,
    target: (usize, usize),
    outcome: (usize, usize),
    level: NpaLevel,
) -> Result<MomentProgram> {
    check_target(s, target)?;
    if coeffs.n_alice() != s.n_a || coeffs.n_bob() != s.n_b {
        return Err(Error::DimensionMismatch {
            context: format!(
                "coefficients are {}x{}, scenario is {}x{}",
                coeffs.n_alice(),
                coeffs.n_bob(),
                s.n_a,
                s.n_b
            ),
        });
    }
    let basis = build_basis(s, level);
    let structure = MomentStructure::build(&basis);
    let mut equalities = Vec::new();
    push_symmetry_equalities(&structure, 0, &mut equalities);
    let mut norm = LinearCombo::default();
    norm.push(0, (0, 0), 1.0);
    equalities.push((norm, 1.0));
    equalities.push((bell_combo(&structure, coeffs), observed));
    let mut objective = LinearCombo::default();
    match outcome {
        (1, 1) => {
            // 1 - <P_x> - <P_y> + <P_x P_y>, with the leading 1 as a constant
            // thanks to normalization.
            push_outcome_probability(&mut objective, &structure, 0, target, (1, 1), 1.0);
            // Replace the identity-entry term with a constant so the
            // objective matrix stays sparse on the normalization entry.
            objective.terms.retain(|t| (t.row, t.col) != (0, 0));
            objective.constant = 1.0;
        }
        other => push_outcome_probability(&mut objective, &structure, 0, target, other, 1.0),
    }
    Ok(MomentProgram {
        gamma_dim: basis.len(),
        basis,
        blocks: 1,
        equalities,
        objective,
    })
}

fn certified_value(sol: &MomentSolution) -> f64 {
    if sol.dual_residual <= 1e-5 {
        sol.value.max(sol.upper_bound)
    } else {
        sol.value
    }
}

/// Bounds the guessing probability of the outcome pair at `target` from the
/// observed value of a Bell functional, solving one SDP per outcome pair and
/// returning the maximum.
pub fn max_prob_given_violation(
    s: &Scenario,
    coeffs: &BellCoefficients,
    observed: f64,
    target: (usize, usize),
    level: NpaLevel,
    opts: &SolveOptions,
) -> Result<CertResult> {
    check_target(s, target)?;
    if observed.abs() > coeffs.abs_sum() + 1e-9 {
        let max = relaxation_max_bell(s, coeffs, level, opts)?;
        return Err(Error::InfeasibleViolation {
            observed,
            relaxation_max: max,
        });
    }
    let mut best: Option<MomentSolution> = None;
    let mut worst_residual = 0.0_f64;
    for a in 0..2 {
        for b in 0..2 {
            let program = violation_program(s, coeffs, observed, target, (a, b), level)?;
            let sol = program.solve(opts)?;
            worst_residual = worst_residual.max(sol.max_equality_residual);
            let replace = match &best {
                None => true,
                Some(prev) => certified_value(&sol) > certified_value(prev),
            };
            if replace {
                best = Some(sol);
            }
        }
    }
    let best = best.expect("four outcome solves ran");
    if worst_residual > 1e-5 {
        // The equality on the Bell value could not be met; report whether the
        // requested value is beyond the relaxation.
        let max = relaxation_max_bell(s, coeffs, level, opts)?;
        if observed > max + 1e-6 {
            return Err(Error::InfeasibleViolation {
                observed,
                relaxation_max: max,
            });
        }
    }
    Ok(CertResult::from_p_guess(
        certified_value(&best),
        level,
        target,
        ConstraintMode::ViolationOnly,
        best.status,
        best.gap,
    ))
}

/// Program for the adversary decomposition: four subnormalized moment blocks,
/// one per adversary outcome, whose behaviors sum to the observed table; the
/// objective collects `p_e(ab = e | target)` across blocks.
pub fn full_statistics_program(
    s: &Scenario,
    beh: &Behavior,
    target: (usize, usize),
    level: NpaLevel,
) -> Result<MomentProgram> {
    check_target(s, target)?;
    if beh.n_alice() != s.n_a || beh.n_bob() != s.n_b {
        return Err(Error::DimensionMismatch {
            context: format!(
                "behavior is {}x{}, scenario is {}x{}",
                beh.n_alice(),
                beh.n_bob(),
                s.n_a,
                s.n_b
            ),
        });
    }
    let dev = beh.no_signaling_deviation();
    if dev > NO_SIGNALING_TOL {
        return Err(Error::NoSignalingViolated { max_dev: dev });
    }
    let basis = build_basis(s, level);
    let structure = MomentStructure::build(&basis);
    let blocks = 4;
    let mut equalities = Vec::new();
    for e in 0..blocks {
        push_symmetry_equalities(&structure, e, &mut equalities);
    }
    // Blocks are subnormalized: their identity entries are the adversary's
    // outcome probabilities and must sum to one.
    let mut norm = LinearCombo::default();
    for e in 0..blocks {
        norm.push(e, (0, 0), 1.0);
    }
    equalities.push((norm, 1.0));
    for q in all_quantities(s) {
        let entry = structure
            .representative(&quantity_word(q))
            .expect("behavior words are present at every level");
        let mut combo = LinearCombo::default();
        for e in 0..blocks {
            combo.push(e, entry, 1.0);
        }
        equalities.push((combo, quantity_value(q, beh)));
    }
    let mut objective = LinearCombo::default();
    for a in 0..2 {
        for b in 0..2 {
            let e = a * 2 + b;
            push_outcome_probability(&mut objective, &structure, e, target, (a, b), 1.0);
        }
    }
    Ok(MomentProgram {
        gamma_dim: basis.len(),
        basis,
        blocks,
        equalities,
        objective,
    })
}

/// Bounds the probability that an adversary compatible with the complete
/// observed statistics guesses the outcome pair at `target`.
pub fn max_guess_full_statistics(
    s: &Scenario,
    beh: &Behavior,
    target: (usize, usize),
    level: NpaLevel,
    opts: &SolveOptions,
) -> Result<CertResult> {
    let program = full_statistics_program(s, beh, target, level)?;
    let sol = program.solve(opts)?;
    if sol.max_equality_residual > 1e-5 {
        return Err(Error::InfeasibleBehavior {
            residual: sol.max_equality_residual,
        });
    }
    Ok(CertResult::from_p_guess(
        certified_value(&sol),
        level,
        target,
        ConstraintMode::FullStatistics,
        sol.status,
        sol.gap,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{
        BellCoefficients, behavior_from_state, canonical_measurements, noisy_behavior,
    };
    use crate::qstate::TwoQubitState;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn basis_sizes_match_enumeration() {
        let s3 = Scenario::chained(3).unwrap();
        assert_eq!(build_basis(&s3, NpaLevel::Q1).len(), 7);
        assert_eq!(build_basis(&s3, NpaLevel::OnePlusAb).len(), 16);
        let s2 = Scenario::chained(2).unwrap();
        assert_eq!(build_basis(&s2, NpaLevel::Q2).len(), 13);
    }

    #[test]
    fn bases_are_nested_by_level() {
        let s = Scenario::chained(3).unwrap();
        let q1 = build_basis(&s, NpaLevel::Q1);
        let ab = build_basis(&s, NpaLevel::OnePlusAb);
        let q2 = build_basis(&s, NpaLevel::Q2);
        for i in 0..q1.len() {
            assert_eq!(q1.word(i), ab.word(i));
        }
        for i in 0..ab.len() {
            assert_eq!(ab.word(i), q2.word(i));
        }
    }

    #[test]
    fn words_reduce_with_idempotence() {
        let w1 = Word {
            a: vec![0, 1],
            b: vec![],
        };
        let w2 = Word {
            a: vec![1, 0],
            b: vec![],
        };
        // (A0 A1)^dag (A1 A0) = A1 A0 A1 A0 reduced from A1 A0 . A1 A0 with a
        // collapsed junction.
        let prod = dagger_product(&w1, &w2);
        assert_eq!(prod.a, vec![1, 0, 1, 0][..prod.a.len()].to_vec());
        assert!(prod.a.windows(2).all(|w| w[0] != w[1]));

        let w = Word {
            a: vec![2],
            b: vec![],
        };
        let sq = dagger_product(&w, &w);
        assert_eq!(sq.a, vec![2]);
        assert!(sq.b.is_empty());
    }

    #[test]
    fn canonical_identifies_adjoints() {
        let w = Word {
            a: vec![0, 1],
            b: vec![2],
        };
        assert_eq!(w.canonical(), w.adjoint().canonical());
    }

    #[test]
    fn identity_class_is_the_corner_entry() {
        let s = Scenario::chained(3).unwrap();
        let basis = build_basis(&s, NpaLevel::Q2);
        let structure = MomentStructure::build(&basis);
        let id_class = structure.class_of[&Word::identity()];
        assert_eq!(structure.members[id_class], vec![(0, 0)]);
    }

    #[test]
    fn behavior_constraints_for_uniform_table() {
        let s = Scenario::chained(3).unwrap();
        let basis = build_basis(&s, NpaLevel::OnePlusAb);
        let beh = Behavior::uniform(3, 3);
        let eqs = behavior_constraints(&basis, &beh).unwrap();
        assert_eq!(eqs.len(), 3 + 3 + 9);
        for eq in &eqs {
            match eq.quantity {
                MomentQuantity::Joint(_, _) => assert_abs_diff_eq!(eq.value, 0.25, epsilon = 1e-15),
                _ => assert_abs_diff_eq!(eq.value, 0.5, epsilon = 1e-15),
            }
        }
    }

    #[test]
    fn behavior_constraints_for_ideal_chained_statistics() {
        let s = Scenario::chained(3).unwrap();
        let basis = build_basis(&s, NpaLevel::Q2);
        let b = TwoQubitState::singlet().bloch();
        let ms = canonical_measurements(3).unwrap();
        let beh = behavior_from_state(&b, &ms).unwrap();
        let eqs = behavior_constraints(&basis, &beh).unwrap();
        let joint00 = eqs
            .iter()
            .find(|e| matches!(e.quantity, MomentQuantity::Joint(0, 0)))
            .unwrap();
        assert_abs_diff_eq!(joint00.value, (1.0 + (PI / 6.0).cos()) / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn joint_moments_are_affine_in_visibility() {
        let b = TwoQubitState::singlet().bloch();
        let ms = canonical_measurements(3).unwrap();
        let q = behavior_from_state(&b, &ms).unwrap();
        let s = Scenario::chained(3).unwrap();
        let basis = build_basis(&s, NpaLevel::Q1);
        let at = |p: f64| -> Vec<f64> {
            behavior_constraints(&basis, &noisy_behavior(&q, p).unwrap())
                .unwrap()
                .iter()
                .map(|e| e.value)
                .collect()
        };
        let v0 = at(0.2);
        let v1 = at(0.8);
        let mid = at(0.5);
        for ((a, b), m) in v0.iter().zip(&v1).zip(&mid) {
            assert_abs_diff_eq!(0.5 * (a + b), *m, epsilon = 1e-14);
        }
    }

    #[test]
    fn chsh_relaxation_max_is_tsirelson() {
        let s = Scenario::chained(2).unwrap();
        let coeffs = BellCoefficients::chsh();
        for level in [NpaLevel::Q1, NpaLevel::OnePlusAb, NpaLevel::Q2] {
            let max = relaxation_max_bell(&s, &coeffs, level, &opts()).unwrap();
            assert_abs_diff_eq!(max, 2.0 * 2.0_f64.sqrt(), epsilon = 2e-5);
        }
    }

    #[test]
    fn chsh_guessing_probability_at_maximum() {
        let s = Scenario::chained(2).unwrap();
        let coeffs = BellCoefficients::chsh();
        let cert = max_prob_given_violation(
            &s,
            &coeffs,
            2.0 * 2.0_f64.sqrt(),
            (0, 0),
            NpaLevel::Q2,
            &opts(),
        )
        .unwrap();
        // Attainable value (1 + 1/sqrt(2))/4 from the optimal strategy; the
        // relaxation is tight at the maximal violation within 2e-3.
        let expected = (1.0 + 1.0 / 2.0_f64.sqrt()) / 4.0;
        assert!(
            (cert.p_guess - expected).abs() <= 2e-3,
            "p_guess = {}, expected about {}",
            cert.p_guess,
            expected
        );
        assert_abs_diff_eq!(
            cert.min_entropy_bits,
            -cert.p_guess.log2(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn classical_value_certifies_nothing() {
        let s = Scenario::chained(3).unwrap();
        let coeffs = BellCoefficients::chained(3).unwrap();
        let cert =
            max_prob_given_violation(&s, &coeffs, 4.0, (0, 0), NpaLevel::OnePlusAb, &opts())
                .unwrap();
        assert!(cert.p_guess >= 1.0 - 1e-6);
        assert!(cert.min_entropy_bits <= 2e-6);
    }

    #[test]
    fn level_monotonicity_of_guessing_bound() {
        let s = Scenario::chained(2).unwrap();
        let coeffs = BellCoefficients::chsh();
        let i_obs = 2.4;
        let p = |level| {
            max_prob_given_violation(&s, &coeffs, i_obs, (0, 0), level, &opts())
                .unwrap()
                .p_guess
        };
        let q1 = p(NpaLevel::Q1);
        let ab = p(NpaLevel::OnePlusAb);
        let q2 = p(NpaLevel::Q2);
        assert!(q1 >= ab - 1e-6, "q1 {q1} vs 1+ab {ab}");
        assert!(ab >= q2 - 1e-6, "1+ab {ab} vs q2 {q2}");
    }

    #[test]
    fn impossible_violation_is_reported_with_relaxation_max() {
        let s = Scenario::chained(2).unwrap();
        let coeffs = BellCoefficients::chsh();
        match max_prob_given_violation(&s, &coeffs, 5.0, (0, 0), NpaLevel::Q1, &opts()) {
            Err(Error::InfeasibleViolation {
                observed,
                relaxation_max,
            }) => {
                assert_eq!(observed, 5.0);
                assert_abs_diff_eq!(relaxation_max, 2.0 * 2.0_f64.sqrt(), epsilon = 1e-4);
            }
            other => panic!("expected InfeasibleViolation, got {other:?}"),
        }
    }

    #[test]
    fn uniform_statistics_leave_the_adversary_certain() {
        let s = Scenario::chained(2).unwrap();
        let beh = Behavior::uniform(2, 2);
        let cert =
            max_guess_full_statistics(&s, &beh, (0, 0), NpaLevel::Q1, &opts()).unwrap();
        assert!(cert.p_guess >= 1.0 - 1e-6);
        assert!(cert.min_entropy_bits <= 2e-6);
    }

    #[test]
    fn full_statistics_beat_violation_only_at_chsh_maximum() {
        let s = Scenario::chained(2).unwrap();
        let b = TwoQubitState::singlet().bloch();
        let ms = canonical_measurements(2).unwrap();
        let q = behavior_from_state(&b, &ms).unwrap();
        let beh = noisy_behavior(&q, 0.9).unwrap();
        let coeffs = BellCoefficients::chsh();
        let viol = max_prob_given_violation(
            &s,
            &coeffs,
            beh.bell_value(&coeffs).unwrap(),
            (0, 0),
            NpaLevel::OnePlusAb,
            &opts(),
        )
        .unwrap();
        let full =
            max_guess_full_statistics(&s, &beh, (0, 0), NpaLevel::OnePlusAb, &opts()).unwrap();
        assert!(
            full.min_entropy_bits >= viol.min_entropy_bits - 1e-6,
            "full {} vs violation {}",
            full.min_entropy_bits,
            viol.min_entropy_bits
        );
    }

    #[test]
    fn full_statistics_program_shape() {
        let s = Scenario::chained(3).unwrap();
        let beh = Behavior::uniform(3, 3);
        let program = full_statistics_program(&s, &beh, (0, 0), NpaLevel::OnePlusAb).unwrap();
        assert_eq!(program.blocks, 4);
        assert_eq!(program.gamma_dim, 16);
        // Four symmetry families plus normalization plus 3 + 3 + 9 behavior
        // sums.
        assert!(program.equalities.len() > 16);
    }

    #[test]
    fn min_entropy_values() {
        assert_abs_diff_eq!(min_entropy(1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(min_entropy(0.25).unwrap(), 2.0, epsilon = 1e-15);
        let h = min_entropy(0.4665).unwrap();
        assert!((h - 1.1).abs() < 0.01);
        assert!(matches!(
            min_entropy(0.0),
            Err(Error::NonpositiveProbability { .. })
        ));
    }

    #[test]
    fn worst_case_helper_picks_minimum_entropy() {
        let s = Scenario::chained(2).unwrap();
        let coeffs = BellCoefficients::chsh();
        let certs: Vec<CertResult> = [(0, 0), (0, 1)]
            .iter()
            .map(|&t| {
                max_prob_given_violation(&s, &coeffs, 2.4, t, NpaLevel::Q1, &opts()).unwrap()
            })
            .collect();
        let worst = worst_case_entropy(&certs).unwrap();
        assert!(certs
            .iter()
            .all(|c| worst.min_entropy_bits <= c.min_entropy_bits + 1e-15));
    }
}
