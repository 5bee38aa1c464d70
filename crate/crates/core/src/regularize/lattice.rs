//! Numerical k-hit laws on a uniform lattice.
//!
//! The input law is split into its parts on A and on Aᶜ, each projected onto
//! the lattice by linear (hat-function) interpolation, which keeps mass and
//! first moment. The k-hit law then has characteristic function
//! Â^k / (1 − Ĉ·(1 + Â + … + Â^{k−1})), evaluated with the FFT. Atoms of
//! the output are computed exactly by a sparse recursion over the atoms of
//! the input.

use std::collections::HashMap;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{expected_draws, HitSet, RegError};
use crate::distributions::{Atom, Component, DensityTable, Family, JumpDistribution};
use crate::verify::linear_fit;

const CELLS_PER_MEAN: f64 = 400.0;
const MAX_LEN: usize = 1 << 22;
const WRAP_TOL: f64 = 1e-10;
const CUT_LEVEL: f64 = 1e-8;
const FIT_TOP: f64 = 1e-5;
const ATOM_FLOOR: f64 = 1e-15;
const ATOM_KEY_SCALE: f64 = 1_099_511_627_776.0;

/// A tabulated k-hit law and diagnostics of the computation.
#[derive(Debug, Clone)]
pub struct KHitLaw {
    pub law: JumpDistribution,
    pub step: f64,
    pub horizon: f64,
    pub hit_probability: f64,
    /// Mass beyond the last knot, carried by the fitted exponential tail.
    pub tail_mass: f64,
    pub tail_fit_r_squared: f64,
}

struct Lattice {
    inside: Vec<f64>,
    outside: Vec<f64>,
    atoms_inside: Vec<f64>,
    atoms_outside: Vec<f64>,
}

fn split_into(lat: &mut [f64], step: f64, start: usize, mass: f64, moment_from_start: f64) {
    if mass == 0.0 {
        return;
    }
    let frac = (moment_from_start / (mass * step)).clamp(0.0, 1.0);
    lat[start] += mass * (1.0 - frac);
    if start + 1 < lat.len() {
        lat[start + 1] += mass * frac;
    }
}

/// Mass and moment about `origin` of the absolutely continuous part on (a, b).
fn piece(jump: &JumpDistribution, a: f64, b: f64, origin: f64) -> (f64, f64) {
    let mass = jump.ac_mass_between(a, b);
    let first = jump.ac_upper_moment(a) - jump.ac_upper_moment(b);
    (mass, first - origin * mass)
}

fn project(jump: &JumpDistribution, set: &HitSet, step: f64, len: usize) -> Lattice {
    let mut inside = vec![0.0; len];
    let mut total = vec![0.0; len];
    let mut total_moment = vec![0.0; len];
    for i in 0..len {
        let a = i as f64 * step;
        if jump.ac_survival(a) < 1e-20 {
            break;
        }
        let (m, mom) = piece(jump, a, a + step, a);
        total[i] = m;
        total_moment[i] = mom;
    }
    let mut inside_moment = vec![0.0; len];
    for iv in &set.intervals {
        if iv.hi <= iv.lo {
            continue;
        }
        let first = (iv.lo / step).floor() as usize;
        let mut i = first;
        while i < len {
            let a = i as f64 * step;
            if a >= iv.hi || jump.ac_survival(a) < 1e-20 {
                break;
            }
            let lo = a.max(iv.lo);
            let hi = (a + step).min(iv.hi);
            if hi > lo {
                let (m, mom) = piece(jump, lo, hi, a);
                inside[i] += m;
                inside_moment[i] += mom;
            }
            i += 1;
        }
    }
    let mut lat_in = vec![0.0; len];
    let mut lat_out = vec![0.0; len];
    for i in 0..len {
        split_into(&mut lat_in, step, i, inside[i], inside_moment[i]);
        let m = (total[i] - inside[i]).max(0.0);
        let mom = (total_moment[i] - inside_moment[i]).max(0.0);
        split_into(&mut lat_out, step, i, m, mom);
    }
    let mut atoms_inside = vec![0.0; len];
    let mut atoms_outside = vec![0.0; len];
    for atom in jump.atoms() {
        let i = (atom.location / step).floor() as usize;
        if i >= len {
            continue;
        }
        let target = if set.contains(atom.location) {
            &mut atoms_inside
        } else {
            &mut atoms_outside
        };
        let offset = atom.location - i as f64 * step;
        split_into(target, step, i, atom.mass, atom.mass * offset);
    }
    for i in 0..len {
        lat_in[i] += atoms_inside[i];
        lat_out[i] += atoms_outside[i];
    }
    Lattice {
        inside: lat_in,
        outside: lat_out,
        atoms_inside,
        atoms_outside,
    }
}

/// Inverse transform of Â^k / (1 − Ĉ Σ_{j<k} Â^j) on a cyclic lattice.
fn k_hit_lattice(planner: &mut FftPlanner<f64>, inside: &[f64], outside: &[f64], k: usize) -> Vec<f64> {
    let len = inside.len();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut a: Vec<Complex64> = inside.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut c: Vec<Complex64> = outside.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward.process(&mut a);
    forward.process(&mut c);
    let one = Complex64::new(1.0, 0.0);
    let mut out: Vec<Complex64> = a
        .iter()
        .zip(&c)
        .map(|(&ah, &ch)| {
            let mut power = one;
            let mut partial = Complex64::new(0.0, 0.0);
            for _ in 0..k {
                partial += power;
                power *= ah;
            }
            power / (one - ch * partial)
        })
        .collect();
    inverse.process(&mut out);
    let scale = 1.0 / len as f64;
    out.iter().map(|z| z.re * scale).collect()
}

fn atom_key(x: f64) -> i64 {
    (x * ATOM_KEY_SCALE).round() as i64
}

/// Exact atoms of the k-hit law: the sums along draw sequences made only of
/// atoms, accumulated by run length until the live mass is negligible.
fn atomic_k_hit(inside: &[(f64, f64)], outside: &[(f64, f64)], k: usize) -> Vec<Atom> {
    if inside.is_empty() {
        return vec![];
    }
    let mut states: Vec<HashMap<i64, f64>> = vec![HashMap::new(); k];
    states[0].insert(0, 1.0);
    let mut result: HashMap<i64, f64> = HashMap::new();
    let mut floor = 1e-18;
    for _ in 0..100_000 {
        let live: f64 = states.iter().flat_map(|m| m.values()).sum();
        if live < ATOM_FLOOR {
            break;
        }
        let mut next: Vec<HashMap<i64, f64>> = vec![HashMap::new(); k];
        for (r, state) in states.iter().enumerate() {
            for (&key, &w) in state {
                let x = key as f64 / ATOM_KEY_SCALE;
                for &(a, pa) in inside {
                    let y = atom_key(x + a);
                    if r + 1 == k {
                        *result.entry(y).or_insert(0.0) += w * pa;
                    } else {
                        *next[r + 1].entry(y).or_insert(0.0) += w * pa;
                    }
                }
                for &(c, pc) in outside {
                    *next[0].entry(atom_key(x + c)).or_insert(0.0) += w * pc;
                }
            }
        }
        loop {
            for m in next.iter_mut() {
                m.retain(|_, w| *w > floor);
            }
            if next.iter().map(|m| m.len()).sum::<usize>() <= 100_000 {
                break;
            }
            floor *= 10.0;
        }
        states = next;
    }
    let mut atoms: Vec<Atom> = result
        .into_iter()
        .filter(|&(_, m)| m >= ATOM_FLOOR)
        .map(|(key, mass)| Atom {
            location: key as f64 / ATOM_KEY_SCALE,
            mass,
        })
        .collect();
    atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
    atoms
}

/// Tabulated k-hit law of `jump` for the set `set`.
pub fn k_hit_law(jump: &JumpDistribution, set: &HitSet, k: usize) -> Result<KHitLaw, RegError> {
    if k == 0 {
        return Err(RegError::ZeroRun);
    }
    let p = set.probability(jump);
    if p <= 0.0 {
        return Err(RegError::HitProbability { p, range: "(0, 1]" });
    }
    let mean_in = jump.mean()?;
    let mean_out = expected_draws(p, k) * mean_in;
    let fine = mean_in / CELLS_PER_MEAN;
    let mut horizon = 40.0 * mean_out;
    let mut planner = FftPlanner::new();
    loop {
        let len = ((horizon / fine).ceil() as usize).next_power_of_two().clamp(1024, MAX_LEN);
        let step = horizon / len as f64;
        let lat = project(jump, set, step, len);
        let total = k_hit_lattice(&mut planner, &lat.inside, &lat.outside, k);
        let wrap: f64 = total[len - len / 10..].iter().map(|v| v.abs()).sum();
        if wrap > WRAP_TOL {
            horizon *= 2.0;
            if horizon > 1e4 * mean_out {
                return Err(RegError::Lattice(format!("mass {wrap} still wraps at horizon {horizon}")));
            }
            continue;
        }
        let mut ac = total;
        let mut atoms = Vec::new();
        if !jump.atoms().is_empty() {
            let singular = k_hit_lattice(&mut planner, &lat.atoms_inside, &lat.atoms_outside, k);
            for (v, s) in ac.iter_mut().zip(&singular) {
                *v -= s;
            }
            let split: (Vec<_>, Vec<_>) = jump.atoms().iter().partition(|a| set.contains(a.location));
            let pairs = |v: Vec<&Atom>| v.into_iter().map(|a| (a.location, a.mass)).collect::<Vec<_>>();
            atoms = atomic_k_hit(&pairs(split.0), &pairs(split.1), k);
        }
        return tabulate(ac, atoms, step, horizon, p);
    }
}

fn tabulate(masses: Vec<f64>, atoms: Vec<Atom>, step: f64, horizon: f64, p: f64) -> Result<KHitLaw, RegError> {
    let masses: Vec<f64> = masses.into_iter().map(|v| v.max(0.0)).collect();
    let atom_mass: f64 = atoms.iter().map(|a| a.mass).sum();
    let weight = 1.0 - atom_mass;
    if weight <= 1e-12 {
        let law = JumpDistribution::new(atoms, vec![])?;
        return Ok(KHitLaw {
            law,
            step,
            horizon,
            hit_probability: p,
            tail_mass: 0.0,
            tail_fit_r_squared: 0.0,
        });
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(RegError::Lattice("absolutely continuous part vanished".into()));
    }
    let n = masses.len();
    let mut after = vec![0.0; n];
    for j in (0..n - 1).rev() {
        after[j] = after[j + 1] + masses[j + 1];
    }
    let density = |j: usize| if j == 0 { 2.0 * masses[0] / step } else { masses[j] / step };
    let cut = (0..n).find(|&j| after[j] < CUT_LEVEL * total).unwrap_or(n - 1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..cut)
        .filter(|&j| after[j] <= FIT_TOP * total && masses[j] > 0.0)
        .map(|j| (j as f64 * step, density(j).ln()))
        .unzip();
    let (slope, r2) = if xs.len() >= 10 { linear_fit(&xs, &ys) } else { (0.0, 0.0) };
    let (tail_rate, last) = if slope < 0.0 {
        (Some(-slope), cut)
    } else {
        let last = (0..n).rev().find(|&j| masses[j] > 0.0).unwrap_or(0);
        (None, (last + 1).min(n - 1))
    };
    let knots: Vec<(f64, f64)> = (0..=last).map(|j| (j as f64 * step, density(j))).collect();
    let table = DensityTable::new(knots, tail_rate)?;
    let tail_mass = tail_rate.map_or(0.0, |_| after[last] / total);
    let law = JumpDistribution::new(
        atoms,
        vec![Component {
            weight,
            family: Family::Table(table),
        }],
    )?;
    Ok(KHitLaw {
        law,
        step,
        horizon,
        hit_probability: p,
        tail_mass,
        tail_fit_r_squared: r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_hit_of_exponential_on_lower_interval() {
        let jump = JumpDistribution::exponential(1.0).unwrap();
        let set = HitSet::interval(0.0, 1.0).unwrap();
        let out = k_hit_law(&jump, &set, 1).unwrap();
        let p = 1.0 - (-1.0f64).exp();
        assert_relative_eq!(out.law.mean().unwrap(), 1.0 / p, max_relative = 1e-4);
        let table_rate = match &out.law.components()[0].family {
            Family::Table(t) => t.tail_rate().unwrap(),
            _ => unreachable!(),
        };
        // E[e^{bT}; T ≥ 1] = 1 for the exponential: e^{b−1}/(1 − b) = 1.
        let b = crate::quad::bisect(|b| (b - 1.0f64).exp() / (1.0 - b) - 1.0, 0.0, 0.99);
        assert_relative_eq!(table_rate, b, max_relative = 1e-3);
    }

    #[test]
    fn full_set_gives_convolution_power() {
        let jump = JumpDistribution::exponential(1.0).unwrap();
        let set = HitSet::interval(0.0, f64::INFINITY).unwrap();
        let out = k_hit_law(&jump, &set, 3).unwrap();
        for &t in &[1.0f64, 2.5, 4.0, 8.0] {
            let exact = 1.0 - (-t).exp() * (1.0 + t + t * t / 2.0);
            assert!((out.law.cdf(t) - exact).abs() < 1e-4, "t = {t}");
        }
    }

    #[test]
    fn atoms_are_recovered_exactly() {
        let jump = JumpDistribution::new(
            vec![Atom { location: 1.0, mass: 0.6 }],
            vec![Component {
                weight: 0.4,
                family: Family::Uniform { lo: 0.0, hi: 2.0 },
            }],
        )
        .unwrap();
        let set = HitSet::interval(0.0, 1.5).unwrap();
        let out = k_hit_law(&jump, &set, 2).unwrap();
        let atoms = out.law.atoms();
        assert_eq!(atoms[0].location, 2.0);
        assert_eq!(atoms.len(), 1);
        assert_relative_eq!(atoms[0].mass, 0.36, max_relative = 1e-9);
        let p_in = 0.6 + 0.4 * 0.75;
        assert_relative_eq!(out.law.mean().unwrap(), expected_draws(p_in, 2) * jump.mean().unwrap(), max_relative = 2e-3);
    }
}
