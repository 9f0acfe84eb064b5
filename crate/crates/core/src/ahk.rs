//! Exchangeable models given by piecewise-constant functions of i.i.d.
//! uniforms: every tuple of domain elements draws one uniform per ascending
//! subsequence (plus a global one), and a per-arity function maps those
//! uniforms together with the tuple's extensional type to the purely
//! intensional facts about the tuple. Functions are finite unions of
//! half-open rational boxes, so every marginal is an exact rational volume.

use crate::check::{PropertyReport, Verdict};
use crate::error::{Error, Result};
use crate::family::{Family, WorldDistribution};
use crate::logic::{parse_formula, Datum, QFFormula, Structure, TupleType, Vocabulary};
use crate::num::Num;
use itertools::Itertools;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

/// Refined grid cells per case or per base structure.
const CELL_LIMIT: usize = 1 << 20;

/// The uniform coordinates an arity-m function reads: one per subsequence of
/// the tuple positions 0..m, the empty subsequence (the global uniform)
/// first, then by length and lexicographic order.
pub fn coords(m: usize) -> Vec<Vec<usize>> {
    (0..m).powerset().collect()
}

/// A product of half-open rational intervals, one per coordinate of
/// `coords(m)`, labeled with the purely intensional facts it produces.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBox {
    pub intervals: Vec<(Num, Num)>,
    pub label: Datum,
}

/// One extensional type's partition of the uniform cube into labeled boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct AhkCase {
    pub ext_type: TupleType,
    pub boxes: Vec<LabeledBox>,
}

/// The arity-m component: a labeled partition per extensional m-type with
/// pairwise distinct positions.
#[derive(Clone, Debug, PartialEq)]
pub struct AhkFunction {
    pub arity: usize,
    pub cases: Vec<AhkCase>,
}

/// A complete model: functions for every arity up to `max_arity` that
/// carries purely intensional facts.
#[derive(Clone, Debug, PartialEq)]
pub struct AhkModel {
    max_arity: usize,
    ext: Vocabulary,
    int: Vocabulary,
    functions: BTreeMap<usize, AhkFunction>,
}

fn rat01(n: &Num, what: &str) -> Result<BigRational> {
    let r = n
        .as_rational()
        .ok_or_else(|| Error::Model(format!("{what} must be an exact rational")))?;
    if r.is_negative() || r > &BigRational::one() {
        return Err(Error::Model(format!("{what} {n} is outside [0,1]")));
    }
    Ok(r.clone())
}

fn strides(counts: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; counts.len()];
    for a in (0..counts.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * counts[a + 1];
    }
    s
}

/// A case compiled to a refined grid: per-axis breakpoints and the label of
/// every grid cell. Building it proves the boxes tile the cube exactly.
struct CaseTable {
    breaks: Vec<Vec<BigRational>>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    labels: Vec<u32>,
    data: Vec<Datum>,
}

impl CaseTable {
    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }
}

fn case_table(m: usize, case: &AhkCase) -> Result<CaseTable> {
    let k = 1usize << m;
    let unit: BTreeSet<BigRational> =
        [BigRational::zero(), BigRational::one()].into_iter().collect();
    let mut sets = vec![unit; k];
    for b in &case.boxes {
        if b.intervals.len() != k {
            return Err(Error::Arity(format!("arity-{m} box must have {k} intervals")));
        }
        for (a, (lo, hi)) in b.intervals.iter().enumerate() {
            let lo = rat01(lo, "box endpoint")?;
            let hi = rat01(hi, "box endpoint")?;
            if lo >= hi {
                return Err(Error::Model(format!("empty box interval [{lo}, {hi})")));
            }
            sets[a].insert(lo);
            sets[a].insert(hi);
        }
    }
    let breaks: Vec<Vec<BigRational>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
    let counts: Vec<usize> = breaks.iter().map(|b| b.len() - 1).collect();
    let cells = counts.iter().try_fold(1usize, |acc, &c| {
        acc.checked_mul(c).filter(|&n| n <= CELL_LIMIT)
    });
    let cells = cells.ok_or_else(|| Error::Capacity("box grid is too fine".into()))?;
    let strides = strides(&counts);
    let mut labels = vec![u32::MAX; cells];
    let mut data: Vec<Datum> = Vec::new();
    let mut index: BTreeMap<Datum, u32> = BTreeMap::new();
    for b in &case.boxes {
        let li = *index.entry(b.label.clone()).or_insert_with(|| {
            data.push(b.label.clone());
            (data.len() - 1) as u32
        });
        let ranges: Vec<std::ops::Range<usize>> = b
            .intervals
            .iter()
            .enumerate()
            .map(|(a, (lo, hi))| {
                let l = breaks[a].binary_search(lo.as_rational().unwrap()).unwrap();
                let h = breaks[a].binary_search(hi.as_rational().unwrap()).unwrap();
                l..h
            })
            .collect();
        for cell in ranges.into_iter().multi_cartesian_product() {
            let f: usize = cell.iter().zip(&strides).map(|(i, s)| i * s).sum();
            if labels[f] != u32::MAX {
                return Err(Error::Model("boxes overlap".into()));
            }
            labels[f] = li;
        }
    }
    if labels.contains(&u32::MAX) {
        return Err(Error::Model("boxes do not tile the uniform cube".into()));
    }
    Ok(CaseTable { breaks, counts, strides, labels, data })
}

/// Local interval index of every interval of the refinement `global` of
/// `local` (both sorted, same endpoints).
fn refine_map(global: &[BigRational], local: &[BigRational]) -> Vec<usize> {
    let mut out = Vec::with_capacity(global.len() - 1);
    let mut li = 0usize;
    for g in 0..global.len() - 1 {
        while li + 1 < local.len() - 1 && local[li + 1] <= global[g] {
            li += 1;
        }
        out.push(li);
    }
    out
}

fn fnv64(bytes: &[u8], basis: u64) -> u64 {
    let mut h = basis;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// One deterministic uniform per (seed, element tuple), as a raw u64 whose
/// value over 2^64 is the sample.
pub(crate) fn keyed_u64(seed: u64, tuple: &[String]) -> u64 {
    let mut enc: Vec<u8> = Vec::new();
    for e in tuple {
        enc.extend_from_slice(e.as_bytes());
        enc.push(0x1f);
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv64(&enc, 0xcbf29ce484222325).to_le_bytes());
    key[16..24].copy_from_slice(&fnv64(&enc, 0x9e3779b97f4a7c15).to_le_bytes());
    key[24..32].copy_from_slice(&(tuple.len() as u64).to_le_bytes());
    ChaCha12Rng::from_seed(key).next_u64()
}

/// One function application: the ascending element tuple, the element tuple
/// feeding each coordinate, and the compiled case for the tuple's
/// extensional type. The highest-arity coordinate (the tuple's own uniform)
/// is private to the application; all others may be shared.
struct App {
    tuple: Vec<String>,
    axis_coords: Vec<Vec<String>>,
    table: Rc<CaseTable>,
    top_axis: Option<usize>,
}

impl AhkModel {
    pub fn new(
        max_arity: usize,
        ext: Vocabulary,
        int: Vocabulary,
        functions: Vec<AhkFunction>,
    ) -> Result<AhkModel> {
        let mut map = BTreeMap::new();
        for f in functions {
            if map.insert(f.arity, f).is_some() {
                return Err(Error::Model("duplicate function arity".into()));
            }
        }
        let model = AhkModel { max_arity, ext, int, functions: map };
        model.validate()?;
        Ok(model)
    }

    pub fn max_arity(&self) -> usize {
        self.max_arity
    }

    pub fn ext_vocab(&self) -> &Vocabulary {
        &self.ext
    }

    pub fn int_vocab(&self) -> &Vocabulary {
        &self.int
    }

    pub fn functions(&self) -> impl Iterator<Item = &AhkFunction> {
        self.functions.values()
    }

    /// The vocabulary the functions' labels speak: intensional relations
    /// that are not extensional.
    pub fn pure_vocab(&self) -> Vocabulary {
        let mut v = Vocabulary::new();
        for (name, a) in self.int.relations_minus(&self.ext) {
            v.add_relation(&name, a).expect("relations of a valid vocabulary");
        }
        v
    }

    fn validate(&self) -> Result<()> {
        if !self.ext.is_relational() || !self.int.is_relational() {
            return Err(Error::Constants("model vocabularies must be relational".into()));
        }
        if !self.ext.is_subvocab_of(&self.int) {
            return Err(Error::VocabMismatch("extensional vocabulary must embed in the intensional".into()));
        }
        let pure = self.pure_vocab();
        if self.max_arity < pure.max_arity() {
            return Err(Error::Arity(format!(
                "max arity {} below the intensional arity {}",
                self.max_arity,
                pure.max_arity()
            )));
        }
        for (&m, f) in &self.functions {
            if f.arity != m || m == 0 || m > self.max_arity {
                return Err(Error::Arity(format!("function arity {m} out of range")));
            }
        }
        for m in 1..=self.max_arity {
            // arities whose tuples carry facts need a function; trivial ones may omit it
            if Datum::enumerate(&pure, m)?.len() > 1 && !self.functions.contains_key(&m) {
                return Err(Error::Model(format!("missing arity-{m} function")));
            }
        }
        for (&m, f) in &self.functions {
            let expected: BTreeSet<TupleType> =
                TupleType::enumerate_distinct(&self.ext, m)?.into_iter().collect();
            let valid_labels: BTreeSet<Datum> = Datum::enumerate(&pure, m)?.into_iter().collect();
            let mut seen: BTreeSet<TupleType> = BTreeSet::new();
            for case in &f.cases {
                if !seen.insert(case.ext_type.clone()) {
                    return Err(Error::Model(format!("duplicate case for type {}", case.ext_type)));
                }
                for b in &case.boxes {
                    if !valid_labels.contains(&b.label) {
                        return Err(Error::Model(format!("invalid label {}", b.label)));
                    }
                }
                case_table(m, case)?;
            }
            if seen != expected {
                return Err(Error::Model(format!("arity-{m} cases do not cover the extensional types")));
            }
        }
        Ok(())
    }

    fn case_for(&self, m: usize, ext_type: &TupleType) -> Result<&AhkCase> {
        let f = self
            .functions
            .get(&m)
            .ok_or_else(|| Error::Model(format!("no arity-{m} function")))?;
        f.cases
            .iter()
            .find(|c| &c.ext_type == ext_type)
            .ok_or_else(|| Error::Model(format!("no case for type {ext_type}")))
    }

    /// Pointwise permutation equivariance of every function, checked as
    /// exact equality of labels on the common refinement of each case with
    /// its permuted counterpart.
    pub fn check_equivariance(&self) -> Result<PropertyReport> {
        let mut report = PropertyReport {
            property: "equivariance".into(),
            verdict: Verdict::Holds,
            checked_up_to: self.max_arity,
            witness: None,
            note: None,
        };
        for (&m, f) in &self.functions {
            let cs = coords(m);
            let idx_of: BTreeMap<Vec<usize>, usize> =
                cs.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
            let tables: Vec<CaseTable> =
                f.cases.iter().map(|c| case_table(m, c)).collect::<Result<_>>()?;
            for perm in (0..m).permutations(m) {
                // coordinate the permuted reading of axis S actually consumes
                let moved: Vec<usize> = cs
                    .iter()
                    .map(|s| {
                        let mut t: Vec<usize> = s.iter().map(|&p| perm[p]).collect();
                        t.sort_unstable();
                        idx_of[&t]
                    })
                    .collect();
                for (ci, case) in f.cases.iter().enumerate() {
                    let psi_type = case.ext_type.permute(&perm)?;
                    let pi = f
                        .cases
                        .iter()
                        .position(|c| c.ext_type == psi_type)
                        .ok_or_else(|| Error::Model(format!("no case for type {psi_type}")))?;
                    let (tphi, tpsi) = (&tables[ci], &tables[pi]);
                    let mut global: Vec<BTreeSet<BigRational>> =
                        tphi.breaks.iter().map(|b| b.iter().cloned().collect()).collect();
                    for (s, &t) in moved.iter().enumerate() {
                        global[t].extend(tpsi.breaks[s].iter().cloned());
                    }
                    let global: Vec<Vec<BigRational>> =
                        global.into_iter().map(|s| s.into_iter().collect()).collect();
                    let g2l_phi: Vec<Vec<usize>> =
                        (0..cs.len()).map(|a| refine_map(&global[a], &tphi.breaks[a])).collect();
                    let g2l_psi: Vec<Vec<usize>> =
                        (0..cs.len()).map(|s| refine_map(&global[moved[s]], &tpsi.breaks[s])).collect();
                    let counts: Vec<usize> = global.iter().map(|b| b.len() - 1).collect();
                    for cell in counts.iter().map(|&c| 0..c).multi_cartesian_product() {
                        let lphi: Vec<usize> =
                            (0..cs.len()).map(|a| g2l_phi[a][cell[a]]).collect();
                        let lpsi: Vec<usize> =
                            (0..cs.len()).map(|s| g2l_psi[s][cell[moved[s]]]).collect();
                        let dphi = &tphi.data[tphi.labels[tphi.flat(&lphi)] as usize];
                        let dpsi = &tpsi.data[tpsi.labels[tpsi.flat(&lpsi)] as usize];
                        if dpsi != &dphi.permute(&perm)? {
                            report.verdict = Verdict::Violated;
                            report.note = Some(format!(
                                "arity {m}, permutation {perm:?}, type {}: {} vs permuted {}",
                                case.ext_type, dpsi, dphi
                            ));
                            return Ok(report);
                        }
                    }
                }
            }
        }
        Ok(report)
    }

    /// The applications (one per ascending tuple and function arity) over a
    /// base structure, with compiled cases shared across equal types.
    fn applications(&self, base: &Structure) -> Result<Vec<App>> {
        let mut cache: BTreeMap<(usize, TupleType), Rc<CaseTable>> = BTreeMap::new();
        let n = base.domain().len();
        let mut apps = Vec::new();
        for (&m, _) in &self.functions {
            if m > n {
                continue;
            }
            let cs = coords(m);
            for combo in (0..n).combinations(m) {
                let tuple: Vec<String> = combo.iter().map(|&i| base.domain()[i].clone()).collect();
                let ext_type = TupleType::of(base, &tuple, &self.ext)?;
                let table = match cache.get(&(m, ext_type.clone())) {
                    Some(t) => t.clone(),
                    None => {
                        let t = Rc::new(case_table(m, self.case_for(m, &ext_type)?)?);
                        cache.insert((m, ext_type), t.clone());
                        t
                    }
                };
                let axis_coords: Vec<Vec<String>> = cs
                    .iter()
                    .map(|s| s.iter().map(|&p| tuple[p].clone()).collect())
                    .collect();
                let top_axis = self.top_arity().filter(|&t| m == t).map(|_| cs.len() - 1);
                apps.push(App { tuple, axis_coords, table, top_axis });
            }
        }
        Ok(apps)
    }

    fn top_arity(&self) -> Option<usize> {
        self.functions.keys().max().copied()
    }

    /// Exact distribution over intensional extensions of `base`, by joint
    /// enumeration of the refined grid on all shared uniforms; each
    /// highest-arity tuple's own uniform is integrated out per application.
    pub fn induced_distribution(&self, base: &Structure) -> Result<WorldDistribution> {
        let base = base.reduct(&self.ext)?;
        let base_full = base.expand_vocab(&self.int)?;
        let apps = self.applications(&base)?;
        // shared coordinates: the global uniform plus every non-top axis
        let mut shared: BTreeMap<Vec<String>, BTreeSet<BigRational>> = BTreeMap::new();
        let unit: BTreeSet<BigRational> =
            [BigRational::zero(), BigRational::one()].into_iter().collect();
        shared.insert(Vec::new(), unit.clone());
        for app in &apps {
            for (a, coord) in app.axis_coords.iter().enumerate() {
                if app.top_axis != Some(a) {
                    shared
                        .entry(coord.clone())
                        .or_insert_with(|| unit.clone())
                        .extend(app.table.breaks[a].iter().cloned());
                }
            }
        }
        let coord_idx: BTreeMap<Vec<String>, usize> =
            shared.keys().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        let gb: Vec<Vec<BigRational>> =
            shared.into_values().map(|s| s.into_iter().collect()).collect();
        let counts: Vec<usize> = gb.iter().map(|b| b.len() - 1).collect();
        counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c).filter(|&n| n <= CELL_LIMIT))
            .ok_or_else(|| Error::Capacity("shared uniform grid is too fine".into()))?;
        let lens: Vec<Vec<BigRational>> = gb
            .iter()
            .map(|b| b.windows(2).map(|w| &w[1] - &w[0]).collect())
            .collect();
        // per app and non-top axis: shared coordinate index and grid refinement
        let axis_refs: Vec<Vec<Option<(usize, Vec<usize>)>>> = apps
            .iter()
            .map(|app| {
                app.axis_coords
                    .iter()
                    .enumerate()
                    .map(|(a, coord)| {
                        if app.top_axis == Some(a) {
                            None
                        } else {
                            let ci = coord_idx[coord];
                            Some((ci, refine_map(&gb[ci], &app.table.breaks[a])))
                        }
                    })
                    .collect()
            })
            .collect();
        let mut acc: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
        for cell in counts.iter().map(|&c| 0..c).multi_cartesian_product() {
            let cellw: BigRational =
                cell.iter().enumerate().map(|(ci, &g)| lens[ci][g].clone()).product();
            let mut key = vec![0u32; apps.len()];
            let mut tops: Vec<(usize, Vec<(u32, BigRational)>)> = Vec::new();
            for (ai, app) in apps.iter().enumerate() {
                let mut local = vec![0usize; app.axis_coords.len()];
                for (a, r) in axis_refs[ai].iter().enumerate() {
                    if let Some((ci, g2l)) = r {
                        local[a] = g2l[cell[*ci]];
                    }
                }
                match app.top_axis {
                    None => key[ai] = app.table.labels[app.table.flat(&local)],
                    Some(t) => {
                        let mut alts: BTreeMap<u32, BigRational> = BTreeMap::new();
                        for i in 0..app.table.counts[t] {
                            local[t] = i;
                            let l = app.table.labels[app.table.flat(&local)];
                            let w = &app.table.breaks[t][i + 1] - &app.table.breaks[t][i];
                            *alts.entry(l).or_insert_with(BigRational::zero) += w;
                        }
                        tops.push((ai, alts.into_iter().collect()));
                    }
                }
            }
            expand_alternatives(&tops, 0, &mut key, &cellw, &mut acc);
        }
        let mut table: BTreeMap<Structure, Num> = BTreeMap::new();
        for (key, w) in acc {
            let mut world = base_full.clone();
            for (ai, app) in apps.iter().enumerate() {
                app.table.data[key[ai] as usize].apply_to(&mut world, &app.tuple)?;
            }
            let slot = table.entry(world).or_insert_with(Num::zero);
            *slot = slot.clone() + Num::from_rational(w);
        }
        WorldDistribution::new(base, self.int.clone(), table)
    }

    /// Marginal probability of a query over the tuple positions x1..xk of an
    /// extensional type; the cost depends only on the type's arity, never on
    /// an ambient domain.
    pub fn marginal_query(&self, ext_type: &TupleType, query: &QFFormula) -> Result<Num> {
        if ext_type.vocab() != &self.ext {
            return Err(Error::VocabMismatch("type is not over the extensional vocabulary".into()));
        }
        let k = ext_type.arity();
        for v in query.free_vars() {
            let ok = v
                .strip_prefix('X')
                .and_then(|s| s.parse::<usize>().ok())
                .is_some_and(|i| i >= 1 && i <= k);
            if !ok {
                return Err(Error::Arity(format!("query variable {v} is not one of X1..X{k}")));
            }
        }
        let (world, tuple) = ext_type.realize()?;
        let dist = self.induced_distribution(&world)?;
        let assignment: BTreeMap<String, String> =
            (0..k).map(|i| (format!("X{}", i + 1), tuple[i].clone())).collect();
        let mut total = Num::zero();
        for (w, p) in dist.table() {
            if query.evaluate(w, &assignment)? {
                total = total + p;
            }
        }
        Ok(total)
    }

    /// Compile the model against a base for repeated seeded sampling.
    pub fn sampler(&self, base: &Structure) -> Result<WorldSampler> {
        let base = base.reduct(&self.ext)?;
        let base_full = base.expand_vocab(&self.int)?;
        let apps = self.applications(&base)?;
        let two64 = BigInt::one() << 64;
        let apps = apps
            .into_iter()
            .map(|app| {
                let thresholds: Vec<Vec<u128>> = app
                    .table
                    .breaks
                    .iter()
                    .map(|bs| {
                        bs[1..bs.len() - 1]
                            .iter()
                            .map(|b| {
                                // v/2^64 >= b  iff  v >= ceil(b * 2^64)
                                let num = b.numer() * &two64 + b.denom() - BigInt::one();
                                let q: BigInt = num / b.denom();
                                q.to_u128().expect("breakpoint in [0,1]")
                            })
                            .collect()
                    })
                    .collect();
                SampApp { thresholds, app }
            })
            .collect();
        Ok(WorldSampler { base_full, apps })
    }

    /// One exact draw from the induced distribution: every uniform is a
    /// deterministic function of (seed, element tuple), so equal seeds give
    /// equal worlds and extending the base preserves the shared draws.
    pub fn sample_world(&self, base: &Structure, seed: u64) -> Result<Structure> {
        self.sampler(base)?.sample(seed)
    }

    pub fn to_json(&self) -> Result<String> {
        let functions = self
            .functions
            .values()
            .map(|f| FnRepr {
                arity: f.arity,
                cases: f
                    .cases
                    .iter()
                    .map(|c| CaseRepr {
                        ext_assignment: c.ext_type.to_string(),
                        boxes: c
                            .boxes
                            .iter()
                            .map(|b| BoxRepr {
                                intervals: b.intervals.clone(),
                                label: b.label.to_string(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        let repr = ModelRepr {
            max_arity: self.max_arity,
            vocabularies: VocabsRepr {
                ext: self.ext.relations().map(|(n, a)| (n.to_string(), a)).collect(),
                int: self.int.relations().map(|(n, a)| (n.to_string(), a)).collect(),
            },
            functions,
        };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<AhkModel> {
        let repr: ModelRepr = serde_json::from_str(text)?;
        let mut ext = Vocabulary::new();
        for (name, a) in &repr.vocabularies.ext {
            ext.add_relation(name, *a)?;
        }
        let mut int = Vocabulary::new();
        for (name, a) in &repr.vocabularies.int {
            int.add_relation(name, *a)?;
        }
        let mut pure = Vocabulary::new();
        for (name, a) in int.relations_minus(&ext) {
            pure.add_relation(&name, a)?;
        }
        let mut functions = Vec::new();
        for f in &repr.functions {
            let mut cases = Vec::new();
            for c in &f.cases {
                let ext_type =
                    TupleType::from_formula(&ext, f.arity, &parse_formula(&c.ext_assignment)?)?;
                let boxes = c
                    .boxes
                    .iter()
                    .map(|b| {
                        Ok(LabeledBox {
                            intervals: b.intervals.clone(),
                            label: Datum::from_conjunction(&pure, f.arity, &parse_formula(&b.label)?)?,
                        })
                    })
                    .collect::<Result<Vec<LabeledBox>>>()?;
                cases.push(AhkCase { ext_type, boxes });
            }
            functions.push(AhkFunction { arity: f.arity, cases });
        }
        AhkModel::new(repr.max_arity, ext, int, functions)
    }
}

fn expand_alternatives(
    tops: &[(usize, Vec<(u32, BigRational)>)],
    i: usize,
    key: &mut Vec<u32>,
    weight: &BigRational,
    acc: &mut BTreeMap<Vec<u32>, BigRational>,
) {
    if i == tops.len() {
        *acc.entry(key.clone()).or_insert_with(BigRational::zero) += weight;
        return;
    }
    let (ai, alts) = &tops[i];
    for (label, w) in alts {
        key[*ai] = *label;
        expand_alternatives(tops, i + 1, key, &(weight * w), acc);
    }
}

struct SampApp {
    app: App,
    /// Per axis, the interior breakpoints as ceil(b * 2^64): interval lookup
    /// on a raw u64 draw needs no rational arithmetic.
    thresholds: Vec<Vec<u128>>,
}

/// A model compiled against a fixed base structure for cheap repeated draws.
pub struct WorldSampler {
    base_full: Structure,
    apps: Vec<SampApp>,
}

impl WorldSampler {
    pub fn sample(&self, seed: u64) -> Result<Structure> {
        let mut draws: BTreeMap<&[String], u64> = BTreeMap::new();
        let mut world = self.base_full.clone();
        for sa in &self.apps {
            let mut local = Vec::with_capacity(sa.app.axis_coords.len());
            for (a, coord) in sa.app.axis_coords.iter().enumerate() {
                let v = *draws
                    .entry(coord.as_slice())
                    .or_insert_with(|| keyed_u64(seed, coord));
                local.push(sa.thresholds[a].partition_point(|t| u128::from(v) >= *t));
            }
            let t = &sa.app.table;
            t.data[t.labels[t.flat(&local)] as usize].apply_to(&mut world, &sa.app.tuple)?;
        }
        Ok(world)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    #[serde(rename = "maxArity")]
    max_arity: usize,
    vocabularies: VocabsRepr,
    functions: Vec<FnRepr>,
}

#[derive(Serialize, Deserialize)]
struct VocabsRepr {
    ext: BTreeMap<String, usize>,
    int: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct FnRepr {
    arity: usize,
    cases: Vec<CaseRepr>,
}

#[derive(Serialize, Deserialize)]
struct CaseRepr {
    #[serde(rename = "extAssignment")]
    ext_assignment: String,
    boxes: Vec<BoxRepr>,
}

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    intervals: Vec<(Num, Num)>,
    label: String,
}

impl Family {
    pub fn from_ahk(model: &AhkModel) -> Result<Family> {
        let m = model.clone();
        Family::new(model.ext_vocab().clone(), model.int_vocab().clone(), move |base| {
            m.induced_distribution(base)
        })
    }
}

fn pair_label(pure: &Vocabulary, exy: bool, eyx: bool) -> Datum {
    let mut lits = BTreeMap::new();
    lits.insert(("edge".to_string(), vec![0usize, 1]), exy);
    lits.insert(("edge".to_string(), vec![1usize, 0]), eyx);
    Datum::from_literals(pure, 2, lits).expect("cross edges are the covering pair atoms")
}

/// Combined probability that an unordered pair is linked when each direction
/// has its own coin: 1 - (1 - p)(1 - q).
fn linked(p: &Num, q: &Num) -> Num {
    p.clone() + q - p.clone() * q
}

/// Edge boxes for one ordered pair of communities: a single threshold on the
/// pair uniform decides both directions together, so the label is symmetric
/// and each unordered pair is independent of every other.
fn sym_edge_boxes(
    pure: &Vocabulary,
    span: &(Num, Num),
    axis_x: (Num, Num),
    axis_y: (Num, Num),
    q: &Num,
) -> Vec<LabeledBox> {
    let mut boxes = Vec::new();
    for (linked, dq) in [(true, (Num::zero(), q.clone())), (false, (q.clone(), Num::one()))] {
        if dq.0 != dq.1 {
            boxes.push(LabeledBox {
                intervals: vec![span.clone(), axis_x.clone(), axis_y.clone(), dq],
                label: pair_label(pure, linked, linked),
            });
        }
    }
    boxes
}

fn node_label(pure: &Vocabulary, in_c1: bool) -> Datum {
    let mut lits = BTreeMap::new();
    lits.insert(("c0".to_string(), vec![0usize]), !in_c1);
    if pure.arity("c1").is_some() {
        lits.insert(("c1".to_string(), vec![0usize]), in_c1);
    }
    lits.insert(("edge".to_string(), vec![0usize, 0]), false);
    Datum::from_literals(pure, 1, lits).expect("node atoms cover arity one")
}

/// Interval of the node uniform assigned to each community: community 1
/// below the membership probability, community 0 above it.
fn community_axis(p: &Num, c: usize) -> (Num, Num) {
    if c == 1 {
        (Num::zero(), p.clone())
    } else {
        (p.clone(), Num::one())
    }
}

/// Two-community block model with a symmetric edge relation: community
/// membership comes from each node's own uniform and each unordered pair is
/// linked in both directions with probability 1 - (1 - p_ab)(1 - p_ba).
pub fn sbm_model(p: &Num, p00: &Num, p01: &Num, p10: &Num, p11: &Num) -> Result<AhkModel> {
    let ext = Vocabulary::new();
    let int = Vocabulary::with_relations(&[("c0", 1), ("c1", 1), ("edge", 2)]);
    for v in [p, p00, p01, p10, p11] {
        rat01(v, "block model parameter")?;
    }
    let q = [[linked(p00, p00), linked(p01, p10)], [linked(p10, p01), linked(p11, p11)]];
    let mut pure = Vocabulary::new();
    for (name, a) in int.relations_minus(&ext) {
        pure.add_relation(&name, a)?;
    }
    let full = (Num::zero(), Num::one());
    let mut f1_boxes = Vec::new();
    for c in [1usize, 0] {
        let iv = community_axis(p, c);
        if iv.0 != iv.1 {
            f1_boxes.push(LabeledBox {
                intervals: vec![full.clone(), iv],
                label: node_label(&pure, c == 1),
            });
        }
    }
    let mut f2_boxes = Vec::new();
    for (cx, cy) in (0..2).cartesian_product(0..2) {
        let (ax, ay) = (community_axis(p, cx), community_axis(p, cy));
        if ax.0 != ax.1 && ay.0 != ay.1 {
            f2_boxes.extend(sym_edge_boxes(&pure, &full, ax, ay, &q[cx][cy]));
        }
    }
    let node_type = TupleType::enumerate_distinct(&ext, 1)?.pop().unwrap();
    let pair_type = TupleType::enumerate_distinct(&ext, 2)?.pop().unwrap();
    AhkModel::new(
        2,
        ext,
        int,
        vec![
            AhkFunction { arity: 1, cases: vec![AhkCase { ext_type: node_type, boxes: f1_boxes }] },
            AhkFunction { arity: 2, cases: vec![AhkCase { ext_type: pair_type, boxes: f2_boxes }] },
        ],
    )
}

/// Block model with extensional community membership: the case for each
/// pair type fixes the communities, so only the pair uniform is consulted.
pub fn sbm_struct_model(p00: &Num, p01: &Num, p10: &Num, p11: &Num) -> Result<AhkModel> {
    let ext = Vocabulary::with_relations(&[("c1", 1)]);
    let int = Vocabulary::with_relations(&[("c0", 1), ("c1", 1), ("edge", 2)]);
    for v in [p00, p01, p10, p11] {
        rat01(v, "block model parameter")?;
    }
    let q = [[linked(p00, p00), linked(p01, p10)], [linked(p10, p01), linked(p11, p11)]];
    let mut pure = Vocabulary::new();
    for (name, a) in int.relations_minus(&ext) {
        pure.add_relation(&name, a)?;
    }
    let full = (Num::zero(), Num::one());
    let entails = |t: &TupleType, i: usize| -> Result<bool> {
        let (w, tuple) = t.realize()?;
        w.holds("c1", &[tuple[i].clone()])
    };
    let mut f1_cases = Vec::new();
    for t in TupleType::enumerate_distinct(&ext, 1)? {
        let in_c1 = entails(&t, 0)?;
        f1_cases.push(AhkCase {
            ext_type: t,
            boxes: vec![LabeledBox {
                intervals: vec![full.clone(), full.clone()],
                label: node_label(&pure, in_c1),
            }],
        });
    }
    let mut f2_cases = Vec::new();
    for t in TupleType::enumerate_distinct(&ext, 2)? {
        let (cx, cy) = (usize::from(entails(&t, 0)?), usize::from(entails(&t, 1)?));
        let boxes = sym_edge_boxes(&pure, &full, full.clone(), full.clone(), &q[cx][cy]);
        f2_cases.push(AhkCase { ext_type: t, boxes });
    }
    AhkModel::new(
        2,
        ext,
        int,
        vec![
            AhkFunction { arity: 1, cases: f1_cases },
            AhkFunction { arity: 2, cases: f2_cases },
        ],
    )
}

/// Mixture of two block models selected by the global uniform: below `w`
/// the first parameter set applies, above it the second. Not expressible
/// without the global coordinate.
pub fn sbm_mixture_model(w: &Num, a: &[Num; 5], b: &[Num; 5]) -> Result<AhkModel> {
    let wr = rat01(w, "mixture weight")?;
    if wr.is_zero() || wr.is_one() {
        return Err(Error::Model("mixture weight must be strictly between 0 and 1".into()));
    }
    let ext = Vocabulary::new();
    let int = Vocabulary::with_relations(&[("c0", 1), ("c1", 1), ("edge", 2)]);
    for v in a.iter().chain(b.iter()) {
        rat01(v, "block model parameter")?;
    }
    let mut pure = Vocabulary::new();
    for (name, aa) in int.relations_minus(&ext) {
        pure.add_relation(&name, aa)?;
    }
    let spans =
        [(Num::zero(), w.clone()), (w.clone(), Num::one())];
    let mut f1_boxes = Vec::new();
    let mut f2_boxes = Vec::new();
    for (params, span) in [a, b].into_iter().zip(&spans) {
        let [p, p00, p01, p10, p11] = params;
        let q = [[linked(p00, p00), linked(p01, p10)], [linked(p10, p01), linked(p11, p11)]];
        for c in [1usize, 0] {
            let iv = community_axis(p, c);
            if iv.0 != iv.1 {
                f1_boxes.push(LabeledBox {
                    intervals: vec![span.clone(), iv],
                    label: node_label(&pure, c == 1),
                });
            }
        }
        for (cx, cy) in (0..2).cartesian_product(0..2) {
            let (ax, ay) = (community_axis(p, cx), community_axis(p, cy));
            if ax.0 != ax.1 && ay.0 != ay.1 {
                f2_boxes.extend(sym_edge_boxes(&pure, span, ax, ay, &q[cx][cy]));
            }
        }
    }
    let node_type = TupleType::enumerate_distinct(&ext, 1)?.pop().unwrap();
    let pair_type = TupleType::enumerate_distinct(&ext, 2)?.pop().unwrap();
    AhkModel::new(
        2,
        ext,
        int,
        vec![
            AhkFunction { arity: 1, cases: vec![AhkCase { ext_type: node_type, boxes: f1_boxes }] },
            AhkFunction { arity: 2, cases: vec![AhkCase { ext_type: pair_type, boxes: f2_boxes }] },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_query;

    fn params() -> [Num; 5] {
        [Num::ratio(1, 4), Num::ratio(1, 4), Num::ratio(1, 2), Num::ratio(3, 4), Num::one()]
    }

    fn sbm() -> AhkModel {
        let [p, p00, p01, p10, p11] = params();
        sbm_model(&p, &p00, &p01, &p10, &p11).unwrap()
    }

    fn base(n: usize) -> Structure {
        let domain = (0..n).map(|i| format!("e{}", i + 1)).collect();
        Structure::new(Vocabulary::new(), domain).unwrap()
    }

    #[test]
    fn constant_model_is_point_mass() {
        let int = Vocabulary::with_relations(&[("p", 1)]);
        let pure = int.clone();
        let node_type = TupleType::enumerate_distinct(&Vocabulary::new(), 1).unwrap().pop().unwrap();
        let mut lits = BTreeMap::new();
        lits.insert(("p".to_string(), vec![0usize]), true);
        let label = Datum::from_literals(&pure, 1, lits).unwrap();
        let model = AhkModel::new(
            1,
            Vocabulary::new(),
            int,
            vec![AhkFunction {
                arity: 1,
                cases: vec![AhkCase {
                    ext_type: node_type,
                    boxes: vec![LabeledBox {
                        intervals: vec![(Num::zero(), Num::one()), (Num::zero(), Num::one())],
                        label,
                    }],
                }],
            }],
        )
        .unwrap();
        let dist = model.induced_distribution(&base(2)).unwrap();
        assert_eq!(dist.table().len(), 1);
        let (world, p) = dist.table().iter().next().unwrap();
        assert_eq!(*p, Num::one());
        assert!(world.holds("p", &["e1".into()]).unwrap());
        assert!(world.holds("p", &["e2".into()]).unwrap());
        assert_eq!(model.sample_world(&base(2), 7).unwrap(), *world);
    }

    #[test]
    fn block_model_is_equivariant() {
        let report = sbm().check_equivariance().unwrap();
        assert!(report.holds_up_to(), "{report}");
        let [p00, p01, p10, p11] = [Num::ratio(1, 4), Num::ratio(1, 2), Num::ratio(3, 4), Num::one()];
        let report =
            sbm_struct_model(&p00, &p01, &p10, &p11).unwrap().check_equivariance().unwrap();
        assert!(report.holds_up_to(), "{report}");
    }

    #[test]
    fn asymmetric_function_is_not_equivariant() {
        let int = Vocabulary::with_relations(&[("edge", 2)]);
        let node_type = TupleType::enumerate_distinct(&Vocabulary::new(), 1).unwrap().pop().unwrap();
        let pair_type = TupleType::enumerate_distinct(&Vocabulary::new(), 2).unwrap().pop().unwrap();
        let full = (Num::zero(), Num::one());
        let mut loop_lits = BTreeMap::new();
        loop_lits.insert(("edge".to_string(), vec![0usize, 0]), false);
        let f1 = AhkFunction {
            arity: 1,
            cases: vec![AhkCase {
                ext_type: node_type,
                boxes: vec![LabeledBox {
                    intervals: vec![full.clone(), full.clone()],
                    label: Datum::from_literals(&int, 1, loop_lits).unwrap(),
                }],
            }],
        };
        let f2 = AhkFunction {
            arity: 2,
            cases: vec![AhkCase {
                ext_type: pair_type,
                boxes: vec![LabeledBox {
                    intervals: vec![full.clone(), full.clone(), full.clone(), full],
                    label: pair_label(&int, true, false),
                }],
            }],
        };
        let model = AhkModel::new(2, Vocabulary::new(), int, vec![f1, f2]).unwrap();
        let report = model.check_equivariance().unwrap();
        assert_eq!(report.verdict, Verdict::Violated);
    }

    #[test]
    fn block_model_edge_marginal_matches_closed_form() {
        // sum over communities of P(c_x) P(c_y) p_{c_x c_y}
        let model = sbm();
        let pair_type = TupleType::enumerate_distinct(&Vocabulary::new(), 2).unwrap().pop().unwrap();
        let q = parse_query("edge(X1,X2)").unwrap();
        assert_eq!(model.marginal_query(&pair_type, &q).unwrap(), Num::ratio(163, 256));
        let both = parse_query("edge(X1,X2), edge(X2,X1)").unwrap();
        assert_eq!(model.marginal_query(&pair_type, &both).unwrap(), Num::ratio(163, 256));
        let taut = parse_query("X1 = X1").unwrap();
        assert_eq!(model.marginal_query(&pair_type, &taut).unwrap(), Num::one());
    }

    #[test]
    fn struct_block_model_reads_communities_from_the_type() {
        let [p00, p01, p10, p11] = [Num::ratio(1, 4), Num::ratio(1, 2), Num::ratio(3, 4), Num::one()];
        let model = sbm_struct_model(&p00, &p01, &p10, &p11).unwrap();
        let t = TupleType::from_formula(
            model.ext_vocab(),
            2,
            &parse_formula("c1(X1) & !c1(X2) & X1 != X2").unwrap(),
        )
        .unwrap();
        // mixed pair: 1 - (1 - 3/4)(1 - 1/2), identical in both directions
        let q = parse_query("edge(X1,X2)").unwrap();
        assert_eq!(model.marginal_query(&t, &q).unwrap(), Num::ratio(7, 8));
        let back = parse_query("edge(X2,X1)").unwrap();
        assert_eq!(model.marginal_query(&t, &back).unwrap(), Num::ratio(7, 8));
        let both_c0 = TupleType::from_formula(
            model.ext_vocab(),
            2,
            &parse_formula("!c1(X1) & !c1(X2) & X1 != X2").unwrap(),
        )
        .unwrap();
        assert_eq!(model.marginal_query(&both_c0, &q).unwrap(), Num::ratio(7, 16));
    }

    #[test]
    fn marginal_query_agrees_with_induced_marginal_on_a_larger_base() {
        let model = sbm();
        let dist = model.induced_distribution(&base(3)).unwrap();
        assert!(dist.is_exact());
        assert_eq!(dist.normalization(), Num::one());
        let mut total = Num::zero();
        for (w, p) in dist.table() {
            if w.holds("edge", &["e1".into(), "e3".into()]).unwrap() {
                total = total + p;
            }
        }
        assert_eq!(total, Num::ratio(163, 256));
    }

    #[test]
    fn mixture_is_the_weighted_sum_of_components() {
        let a = params();
        let b = [Num::ratio(3, 4), Num::ratio(1, 2), Num::ratio(1, 4), Num::ratio(1, 2), Num::ratio(3, 4)];
        let mix = sbm_mixture_model(&Num::ratio(1, 2), &a, &b).unwrap();
        assert!(mix.check_equivariance().unwrap().holds_up_to());
        let da = sbm().induced_distribution(&base(2)).unwrap();
        let db = sbm_model(&b[0], &b[1], &b[2], &b[3], &b[4])
            .unwrap()
            .induced_distribution(&base(2))
            .unwrap();
        let dm = mix.induced_distribution(&base(2)).unwrap();
        for (w, p) in dm.table() {
            let avg = (da.probability(w) + db.probability(w)) * Num::ratio(1, 2);
            assert_eq!(*p, avg, "world {w:?}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_roughly_calibrated() {
        let model = sbm();
        let sampler = model.sampler(&base(2)).unwrap();
        assert_eq!(sampler.sample(42).unwrap(), sampler.sample(42).unwrap());
        let mut c1_count = 0usize;
        let reps = 2000;
        for seed in 0..reps {
            let w = sampler.sample(seed).unwrap();
            if w.holds("c1", &["e1".into()]).unwrap() {
                c1_count += 1;
            }
        }
        let freq = c1_count as f64 / reps as f64;
        assert!((freq - 0.25).abs() < 0.05, "c1 frequency {freq}");
    }

    #[test]
    fn json_round_trip_preserves_the_model() {
        let model = sbm();
        let text = model.to_json().unwrap();
        let back = AhkModel::from_json(&text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn missing_pair_function_is_rejected() {
        let int = Vocabulary::with_relations(&[("edge", 2)]);
        let node_type = TupleType::enumerate_distinct(&Vocabulary::new(), 1).unwrap().pop().unwrap();
        let mut loop_lits = BTreeMap::new();
        loop_lits.insert(("edge".to_string(), vec![0usize, 0]), false);
        let f1 = AhkFunction {
            arity: 1,
            cases: vec![AhkCase {
                ext_type: node_type,
                boxes: vec![LabeledBox {
                    intervals: vec![(Num::zero(), Num::one()), (Num::zero(), Num::one())],
                    label: Datum::from_literals(&int, 1, loop_lits).unwrap(),
                }],
            }],
        };
        assert!(AhkModel::new(2, Vocabulary::new(), int, vec![f1]).is_err());
    }

    #[test]
    fn gapped_boxes_are_rejected() {
        let int = Vocabulary::with_relations(&[("p", 1)]);
        let node_type = TupleType::enumerate_distinct(&Vocabulary::new(), 1).unwrap().pop().unwrap();
        let mut lits = BTreeMap::new();
        lits.insert(("p".to_string(), vec![0usize]), true);
        let label = Datum::from_literals(&int, 1, lits).unwrap();
        let f1 = AhkFunction {
            arity: 1,
            cases: vec![AhkCase {
                ext_type: node_type,
                boxes: vec![LabeledBox {
                    intervals: vec![(Num::zero(), Num::one()), (Num::zero(), Num::ratio(1, 2))],
                    label,
                }],
            }],
        };
        assert!(AhkModel::new(1, Vocabulary::new(), int, vec![f1]).is_err());
    }
}
