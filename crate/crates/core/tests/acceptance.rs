//! Acceptance suite: every criterion runs to completion and prints one
//! PASS/FAIL line; the process exits nonzero if any fails.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use villadsen_core::af_intertwining::{
    defect_bound, fundamental_value, g_double_sequence, phi_psi_function_maps, r_sequence, select_subsequence,
    Convergence, Mode, SubsequenceOptions,
};
use villadsen_core::dimension_system::unitality_residuals;
use villadsen_core::gen::{self, SystemShape};
use villadsen_core::partition_scheme::{random_partition, single_generator_samples, unit_sample};
use villadsen_core::poulsen_density::quantization_error;
use villadsen_core::trace_tower::{evaluate, extend_af_trace, fiber_check, push_forward, LevelTrace};
use villadsen_core::{
    certify, compose, intertwiner, quantize_measure, recheck_certificate, trace_pullback_matrix, verify_commutation,
    AFTrace, AFVilladsenSystem, CertificateVerdict, DimensionSystem, Error, Int, LevelPermutationFamily, Matrix,
    Measure, Neighborhood, Observable, PoulsenCertificate, Rational, SeedAlgebra, TraceTower, ValueFn,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn q(a: i64, b: i64) -> Rational {
    Rational::new(a.into(), b.into())
}

fn qi(v: &BigInt) -> Rational {
    Rational::from_integer(v.clone())
}

// Naive oracles over plain nested vectors.

fn oracle_mul(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let cols = b[0].len();
    a.iter()
        .map(|row| (0..cols).map(|l| row.iter().zip(b).map(|(x, brow)| x * &brow[l]).sum()).collect())
        .collect()
}

fn to_vecs(m: &Matrix<Int>) -> Vec<Vec<BigInt>> {
    m.to_rows()
}

fn row_times(v: &[BigInt], m: &[Vec<BigInt>]) -> Vec<BigInt> {
    (0..m[0].len()).map(|l| v.iter().zip(m).map(|(x, row)| x * &row[l]).sum()).collect()
}

fn criterion_unitality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut spans = 0usize;
    for case in 0..200 {
        let sys = gen::random_system(&mut rng, SystemShape::default());
        let depth = sys.explicit_depth();
        let thetas: Vec<Vec<Vec<BigInt>>> = (1..depth).map(|i| to_vecs(&sys.theta(i).unwrap())).collect();
        let mut n_oracle = vec![sys.n(1).unwrap()];
        for th in &thetas {
            let next = row_times(n_oracle.last().unwrap(), th);
            n_oracle.push(next);
        }
        for i in 1..depth {
            for t in 1..=depth - i {
                spans += 1;
                let mut prod = thetas[i - 1].clone();
                for th in &thetas[i..i + t - 1] {
                    prod = oracle_mul(&prod, th);
                }
                let composed = compose(&sys, i, t).map_err(|e| e.to_string())?;
                ensure(to_vecs(&composed) == prod, || format!("case {case}: compose({i},{t}) differs from the product"))?;
                ensure(sys.n(i + t).unwrap() == n_oracle[i + t - 1], || format!("case {case}: n_{}", i + t))?;
                ensure(row_times(&n_oracle[i - 1], &prod) == n_oracle[i + t - 1], || format!("case {case}: unit at ({i},{t})"))?;
                ensure(unitality_residuals(&sys, i, t).unwrap().iter().all(Zero::is_zero), || {
                    format!("case {case}: nonzero residual at ({i},{t})")
                })?;
                let m = trace_pullback_matrix(&sys, i, t).map_err(|e| e.to_string())?;
                ensure(m.is_column_stochastic(), || format!("case {case}: M({i},{t}) not column stochastic"))?;
                for (k, l, v) in m.entries.entries() {
                    let expect = Rational::new(&n_oracle[i - 1][k] * &prod[k][l], n_oracle[i + t - 1][l].clone());
                    ensure(*v == expect, || format!("case {case}: M({i},{t}) entry ({k},{l})"))?;
                }
                for split in 1..t {
                    let a = trace_pullback_matrix(&sys, i, split).unwrap();
                    let b = trace_pullback_matrix(&sys, i + split, t - split).unwrap();
                    ensure(a.then(&b).unwrap().entries == m.entries, || format!("case {case}: M functoriality ({i},{split},{t})"))?;
                    let ca = compose(&sys, i, split).unwrap();
                    let cb = compose(&sys, i + split, t - split).unwrap();
                    ensure(ca.try_mul(&cb).unwrap() == composed, || format!("case {case}: compose functoriality ({i},{split},{t})"))?;
                }
            }
        }
    }
    Ok(format!("200 systems, {spans} spans exact"))
}

fn criterion_intertwiner() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut samples_checked = 0usize;
    for case in 0..100 {
        let sys = gen::random_system_exact(&mut rng, SystemShape::default(), 2);
        let p = random_partition(&sys, 1, &mut rng).map_err(|e| e.to_string())?;
        let qs = random_partition(&sys, 1, &mut rng).map_err(|e| e.to_string())?;
        let sigma = LevelPermutationFamily::random(&sys.n_usize(1).unwrap(), &mut rng);
        let gamma = intertwiner(&p, &qs, &sigma).map_err(|e| e.to_string())?;
        let mut samples = single_generator_samples(&sys, 1).unwrap();
        samples.push(unit_sample(&sys, 1).unwrap());
        samples_checked += samples.len();
        let ok = verify_commutation(&p, &qs, &sigma, &gamma, &sys, 1, &samples).map_err(|e| e.to_string())?;
        ensure(ok, || format!("case {case}: γ∘φ_P ≠ φ_Q∘σ"))?;
    }
    Ok(format!("100 triples, {samples_checked} samples, 0 failures"))
}

fn criterion_trace_extension() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let shape = SystemShape { levels: 4, max_j: 3, max_n: 3, max_theta: 2 };
    for case in 0..50 {
        let sys = gen::random_system_exact(&mut rng, shape, 4);
        let seed = SeedAlgebra::new((0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=3)).collect()).unwrap();
        let af = gen::random_af_trace(&mut rng, &sys, 4);
        let seeds: Vec<Measure> =
            sys.n_usize(1).unwrap().iter().map(|&n| gen::random_measure(&mut rng, n, seed.m())).collect();
        let tower = extend_af_trace(&sys, &seed, &af, seeds).map_err(|e| format!("case {case}: {e}"))?;
        ensure(tower.is_consistent(&sys, &seed).unwrap(), || format!("case {case}: pullback inconsistency"))?;
        ensure(fiber_check(&tower, &af), || format!("case {case}: tower left the fiber"))?;
        // adjoint oracle: evaluating below equals evaluating the pushed-forward element above
        for i in 1..4 {
            let below = tower.level(i).unwrap();
            let above = tower.level(i + 1).unwrap();
            for (k, &n) in sys.n_usize(i).unwrap().iter().enumerate() {
                if below.is_flagged(k) {
                    continue;
                }
                let obs = Observable::new(k, n, gen::random_value_fn(&mut rng, n, seed.m())).unwrap();
                let lhs = evaluate(below, &obs).unwrap();
                let rhs: Rational = push_forward(&sys, &obs, i, 1).unwrap().iter().map(|o| evaluate(above, o).unwrap()).sum();
                ensure(lhs == rhs, || format!("case {case}: adjoint identity at level {i}, summand {}", k + 1))?;
            }
        }
    }
    Ok("50 towers of depth 4 consistent and in their fibers".into())
}

fn chain_system(thetas: &[i64]) -> DimensionSystem {
    gen::scalar_chain(thetas, &[], 2).base
}

fn criterion_certificate() -> Outcome {
    let sys = chain_system(&[2, 4, 8, 16]);
    let seed = SeedAlgebra::new(vec![2, 3]).unwrap();
    let n2 = sys.n_usize(2).unwrap()[0];
    let tau = TraceTower::new(vec![LevelTrace::new(2, vec![Rational::one()], vec![seed.uniform(n2).unwrap()])]).unwrap();
    let af = AFTrace::from_top(&sys, 5, vec![Rational::one()]).unwrap();
    let groups: Vec<Vec<Observable>> = (0..n2)
        .flat_map(|c| (0..seed.m()).map(move |x| (c, x)))
        .map(|(c, x)| vec![Observable::new(0, n2, ValueFn::indicator(c, x as u8)).unwrap()])
        .collect();
    let mut summary = Vec::new();
    for eps in [q(1, 10), q(1, 100)] {
        let nbhd = Neighborhood { level: 2, epsilon: eps.clone(), groups: groups.clone() };
        let cert = certify(&sys, &seed, &tau, &nbhd, &af, 8).map_err(|e| e.to_string())?;
        ensure(cert.verdict == CertificateVerdict::Pass, || format!("ε = {eps}: verdict fail"))?;
        ensure(cert.deviations.iter().all(|d| d.deviation < eps), || format!("ε = {eps}: deviation ≥ ε"))?;
        ensure(cert.eta_extreme, || format!("ε = {eps}: η not Dirac above the base"))?;
        ensure(cert.eta_in_fiber, || format!("ε = {eps}: η outside the fiber"))?;
        let text = serde_json::to_string(&cert).unwrap();
        let back: PoulsenCertificate = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        ensure(serde_json::to_string(&back).unwrap() == text, || "certificate does not round-trip".into())?;
        let again = recheck_certificate(&sys, &seed, &tau, &nbhd, &af, &back).map_err(|e| e.to_string())?;
        ensure(again == cert.deviations, || format!("ε = {eps}: recheck differs"))?;
        let worst = cert.deviations.iter().map(|d| d.deviation.clone()).max().unwrap();
        summary.push(format!("ε={eps}: t'={} max dev {worst}", cert.depth));
    }
    Ok(summary.join("; "))
}

fn criterion_quantizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    for case in 0..500 {
        let p = gen::random_dense_measure(&mut rng, 3, 3, 16);
        let n = rng.random_range(1..=64u64);
        let atoms = quantize_measure(&p, n).map_err(|e| e.to_string())?;
        let n_q = Rational::from_integer(n.into());
        let counts: u64 = atoms.iter().map(|a| a.count).sum();
        ensure(counts == n, || format!("case {case}: counts sum to {counts}, not {n}"))?;
        let worst = atoms
            .iter()
            .map(|a| (&a.mass - Rational::from_integer(a.count.into()) / &n_q).abs())
            .max()
            .unwrap_or_else(Rational::zero);
        ensure(worst < n_q.recip(), || format!("case {case}: error {worst} ≥ 1/{n}"))?;
        ensure(quantization_error(&atoms) == worst, || format!("case {case}: reported error differs"))?;
        let supp = p.support_size().unwrap();
        for _ in 0..20 {
            let f = gen::random_value_fn(&mut rng, 3, 3);
            let b = f.sup_bound();
            let exact: Rational = p.atoms().unwrap().iter().map(|(w, m)| m * f.eval(w).unwrap()).sum();
            let avg: Rational = atoms.iter().map(|a| Rational::from_integer(a.count.into()) * f.eval(&a.word).unwrap()).sum::<Rational>() / &n_q;
            let err = (exact - avg).abs();
            let bound = &b * Rational::from_integer(supp.into()) / &n_q;
            ensure(err <= bound, || format!("case {case}: averaged error {err} > {bound}"))?;
        }
    }
    Ok("500 measures, 10000 observables".into())
}

fn powers_chain(depth: usize) -> AFVilladsenSystem {
    let thetas: Vec<i64> = (1..depth as u32).map(|i| 1i64 << i).collect();
    gen::scalar_chain(&thetas, &vec![1; depth - 1], 2)
}

fn criterion_convergent() -> Outcome {
    let depth = 12;
    let sys = powers_chain(depth);
    // oracle: ñ_{i+1} = ñ_i (2^i + 1), n_{i+1} = n_i 2^i
    let mut r_oracle = vec![Rational::one()];
    let (mut nt, mut n) = (BigInt::one(), BigInt::one());
    for i in 1..depth {
        nt *= (BigInt::one() << i) + 1;
        n *= BigInt::one() << i;
        r_oracle.push(Rational::new(nt.clone(), n.clone()));
    }
    ensure(r_oracle[..4] == [q(1, 1), q(3, 2), q(15, 8), q(135, 64)], || "oracle prefix".into())?;
    let r = r_sequence(&sys, depth, &q(1, 100)).map_err(|e| e.to_string())?;
    let computed: Vec<Rational> = r.r.iter().map(|v| v[0].clone()).collect();
    ensure(computed == r_oracle, || "r sequence differs from the oracle".into())?;
    ensure(r.convergence == Convergence::Convergent, || format!("convergence verdict {:?}", r.convergence))?;
    for i in 1..depth {
        for t in 1..=depth - i {
            let f = fundamental_value(&sys, i, t).map_err(|e| e.to_string())?;
            ensure(f == vec![&r_oracle[i + t - 1] / &r_oracle[i - 1] - Rational::one()], || format!("fundamental ({i},{t})"))?;
        }
    }
    let opts = SubsequenceOptions { mode: Mode::Constant, ..Default::default() };
    let sub = select_subsequence(&sys, depth, &opts).map_err(|e| e.to_string())?;
    for i in 1..=4 {
        let (from, to) = (sub.s[i - 1], sub.s[i + 1]);
        let d = defect_bound(&sys, from, to - from).unwrap();
        // closed form from the counts: 2 (n_from/n_to)(Π(θ+1) − Πθ)
        let total: BigInt = (from..to).map(|s| (BigInt::one() << s) + 1).product();
        let plain: BigInt = (from..to).map(|s| BigInt::one() << s).product();
        let closed = Rational::from_integer(2.into()) * (qi(&total) - qi(&plain)) / qi(&plain);
        ensure(d.closed == vec![closed.clone()], || format!("closed bound ({from},{to})"))?;
        let cap = Rational::new(BigInt::one(), BigInt::one() << i);
        ensure(closed < cap, || format!("i={i}: bound {closed} ≥ {cap}"))?;
    }
    Ok(format!("subsequence {:?}", sub.s))
}

fn criterion_divergent() -> Outcome {
    let depth = 10;
    let sys = gen::scalar_chain(&vec![2; depth - 1], &vec![1; depth - 1], 2);
    let r = r_sequence(&sys, depth, &q(1, 100)).map_err(|e| e.to_string())?;
    for (d, v) in r.r.iter().enumerate() {
        let expect = Rational::new(BigInt::from(3).pow(d as u32), BigInt::from(2).pow(d as u32));
        ensure(v == &vec![expect], || format!("r_{} wrong", d + 1))?;
    }
    ensure(r.convergence != Convergence::Convergent, || "divergent sequence judged convergent".into())?;
    let opts = SubsequenceOptions { mode: Mode::Cone, ..Default::default() };
    match select_subsequence(&sys, depth, &opts) {
        Err(Error::ModeMismatch(_)) => Ok(format!("verdict {:?}, cone mode refused", r.convergence)),
        other => Err(format!("expected a mode mismatch, got {other:?}")),
    }
}

fn criterion_function_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let mut cases = 0;
    while cases < 40 {
        let j1 = rng.random_range(1..=2);
        let j2 = rng.random_range(1..=2);
        let n1: Vec<i64> = (0..j1).map(|_| rng.random_range(1..=2)).collect();
        let theta = gen::random_multiplicities(&mut rng, j1, j2, 2);
        let sizes: Vec<Int> = (0..j2).map(|l| (0..j1).map(|k| theta.get(k, l) * n1[k]).sum()).collect();
        if sizes.iter().any(|s| *s > BigInt::from(4)) {
            continue;
        }
        cases += 1;
        let base = DimensionSystem::from_multiplicities(n1.iter().map(|&v| v.into()).collect(), vec![theta.clone()]).unwrap();
        let evals = Matrix::from_fn(j1, j2, |_, _| BigInt::from(rng.random_range(0..=2)));
        let points = (0..j1)
            .map(|k| {
                (0..j2)
                    .map(|l| {
                        let c: usize = evals.get(k, l).try_into().unwrap();
                        (0..c).map(|_| gen::random_word(&mut rng, n1[k] as usize, 2)).collect()
                    })
                    .collect()
            })
            .collect();
        let sys = AFVilladsenSystem::new(base, vec![evals], 2, Some(vec![points])).map_err(|e| e.to_string())?;
        let maps = phi_psi_function_maps(&sys, 1, 1).map_err(|e| e.to_string())?;
        let one: Vec<Vec<Rational>> = maps.phi.source_sizes.iter().map(|&s| vec![Rational::one(); s]).collect();
        for (name, map) in [("φ", &maps.phi), ("ψ", &maps.psi)] {
            let image = map.apply(&one).unwrap();
            ensure(image.iter().flatten().all(One::is_one), || format!("case {cases}: {name} not unital"))?;
        }
        let bound = defect_bound(&sys, 1, 1).unwrap();
        let dim: usize = maps.phi.source_sizes.iter().sum();
        let mut sup = vec![Rational::zero(); j2];
        for mask in 0u64..(1 << dim) {
            let mut flat = (0..dim).map(|b| if mask >> b & 1 == 1 { -Rational::one() } else { Rational::one() });
            let h: Vec<Vec<Rational>> = maps.phi.source_sizes.iter().map(|&s| flat.by_ref().take(s).collect()).collect();
            let (a, b) = (maps.psi.apply(&h).unwrap(), maps.phi.apply(&h).unwrap());
            for l in 0..j2 {
                for (x, y) in a[l].iter().zip(&b[l]) {
                    sup[l] = sup[l].clone().max((x - y).abs());
                }
            }
        }
        for l in 0..j2 {
            ensure(sup[l] <= bound.triangle[l], || format!("case {cases}: sup {} > triangle {}", sup[l], bound.triangle[l]))?;
        }
        ensure(maps.psi.minus(&maps.phi).unwrap().norm_per_target() == sup, || format!("case {cases}: vertex norm differs"))?;
    }
    Ok("40 one-step systems, exhaustive ±1 functions".into())
}

fn criterion_g_sequence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0009);
    let depth = 6;
    let shape = SystemShape { levels: depth, max_j: 2, max_n: 3, max_theta: 3 };
    for case in 0..20 {
        let sys = gen::random_af_system(&mut rng, shape, depth, 1);
        // oracle: Θ_i(v)_l = Σ_k v_k n_{i,k} (θ + |E|)_{k,l} / n_{i+1,l}
        let big_theta = |i: usize, v: &[Rational], with_e: bool| -> Vec<Rational> {
            let th = sys.base.theta(i).unwrap();
            let e = sys.eval_count(i).unwrap();
            let (lo, hi) = (sys.base.n(i).unwrap(), sys.base.n(i + 1).unwrap());
            (0..th.cols())
                .map(|l| {
                    (0..th.rows())
                        .map(|k| {
                            let mult = if with_e { th.get(k, l) + e.get(k, l) } else { th.get(k, l).clone() };
                            &v[k] * Rational::new(&lo[k] * mult, hi[l].clone())
                        })
                        .sum()
                })
                .collect()
        };
        let oracle = |s: usize| -> Vec<Vec<Rational>> {
            let mut g = vec![vec![Rational::one(); sys.base.j(1).unwrap()]];
            for i in 1..depth {
                let next = big_theta(i, g.last().unwrap(), i + 1 > s);
                g.push(next);
            }
            g
        };
        let g1 = oracle(1);
        for s in 1..=depth {
            let report = g_double_sequence(&sys, s, depth).map_err(|e| e.to_string())?;
            let gs = oracle(s);
            ensure(report.g == gs, || format!("case {case}: g^({s}) differs from the oracle"))?;
            let below = gs.iter().zip(&g1).all(|(a, b)| a.iter().zip(b).all(|(x, y)| x <= y));
            ensure(below && report.dominated, || format!("case {case}: g^({s}) exceeds g^(1)"))?;
            ensure(report.telescoping, || format!("case {case}: telescoping fails for s={s}"))?;
            let last: Vec<Rational> = gs[depth - 1].iter().map(|v| v - Rational::one()).collect();
            ensure(report.partial_sums.last() == Some(&last), || format!("case {case}: final partial sum for s={s}"))?;
            ensure(report.gap_identity, || format!("case {case}: gap identity fails for s={s}"))?;
        }
    }
    Ok("20 systems of depth 6, s = 1..6".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("unitality and functoriality", criterion_unitality),
        ("intertwiner commutation", criterion_intertwiner),
        ("AF trace extension", criterion_trace_extension),
        ("density certificate", criterion_certificate),
        ("quantizer bounds", criterion_quantizer),
        ("convergent intertwining example", criterion_convergent),
        ("divergent control", criterion_divergent),
        ("function-level defect oracle", criterion_function_oracle),
        ("g-sequence identities", criterion_g_sequence),
    ];
    let mut failed = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {}. {name}: {detail} ({secs:.2}s)", idx + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {}. {name}: {detail} ({secs:.2}s)", idx + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
