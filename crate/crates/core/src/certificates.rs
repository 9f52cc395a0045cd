//! Finite, independently checkable UNSAT witnesses: a grounded subinstance
//! with no homomorphism to the domain, found by pool search, minimized by
//! greedy vertex deletion, and verified by the exhaustive oracle.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::atoms::Atom;
use crate::csp_model::{DefinableInstance, GroundInstance};
use crate::finite_solver::{brute_force, brute_force_parts, FiniteCsp, SolverError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CertError {
    #[error("brute-force budget exceeded at pool size {pool_size}: {source}")]
    Budget {
        pool_size: usize,
        source: SolverError,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A finite grounded subinstance with no homomorphism to the domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnsatCertificate {
    pub pool: Vec<Atom>,
    pub ground: GroundInstance,
    pub minimal: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CertificateSearch {
    Found(UnsatCertificate),
    NotFound,
}

/// The canonical grounding pool at level `m`: the instance support plus `m`
/// fresh atoms in every order-region the support cuts out (below the least
/// parameter, inside each gap, above the greatest). Without parameters this
/// is the integer pool 1..m. Only the weak order of pool atoms relative to
/// the parameters matters for grounding, so covering each region makes the
/// pool sequence exhaustive.
pub fn canonical_pool(instance: &DefinableInstance, m: usize) -> Vec<Atom> {
    let support = instance.instance_support();
    let params = support.params();
    let mut pool: Vec<Atom> = params.to_vec();
    if params.is_empty() {
        pool.extend((1..=m as i64).map(Atom::from_int));
    } else {
        for i in 1..=m as i64 {
            let step = num_rational::BigRational::from_integer(i.into());
            pool.push(Atom::from_rational(
                params[0].as_rational() - step.clone(),
            ));
            pool.push(Atom::from_rational(
                params[params.len() - 1].as_rational() + step,
            ));
        }
        for w in params.windows(2) {
            let (lo, hi) = (w[0].as_rational(), w[1].as_rational());
            for j in 1..=m as i64 {
                let frac = num_rational::BigRational::new(j.into(), (m as i64 + 1).into());
                pool.push(Atom::from_rational(lo + (hi - lo) * frac));
            }
        }
    }
    pool.sort();
    pool.dedup();
    pool
}

/// Searches pools of increasing size for a grounding refuted by the
/// exhaustive oracle. Returns the certificate from the smallest pool.
pub fn find_certificate(
    instance: &DefinableInstance,
    max_pool: usize,
    budget: u64,
) -> Result<CertificateSearch, CertError> {
    for m in 0..=max_pool {
        let pool = canonical_pool(instance, m);
        let ground = instance.ground(&pool);
        let csp = FiniteCsp::from_ground(&ground, &instance.domain);
        match brute_force(&csp, budget) {
            Ok(Some(_)) => continue,
            Ok(None) => {
                return Ok(CertificateSearch::Found(UnsatCertificate {
                    pool,
                    ground,
                    minimal: false,
                }))
            }
            Err(e) => return Err(CertError::Budget {
                pool_size: m,
                source: e,
            }),
        }
    }
    Ok(CertificateSearch::NotFound)
}

/// Removes vertex `v` and every constraint touching it, reindexing the rest.
fn remove_vertex(g: &GroundInstance, v: usize) -> GroundInstance {
    let vertices: Vec<_> = g
        .vertices
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != v)
        .map(|(_, x)| x.clone())
        .collect();
    let reindex = |i: usize| if i > v { i - 1 } else { i };
    let constraints: Vec<_> = g
        .constraints
        .iter()
        .filter(|(_, idxs)| !idxs.contains(&v))
        .map(|(rel, idxs)| (rel.clone(), idxs.iter().map(|&i| reindex(i)).collect()))
        .collect();
    GroundInstance {
        vertices,
        constraints,
        pool: g.pool.clone(),
    }
}

/// Candidate orderings for greedy deletion; different orders reach different
/// 1-minimal subinstances.
fn removal_orders(g: &GroundInstance) -> Vec<Vec<usize>> {
    let n = g.vertices.len();
    let mut degree = vec![0usize; n];
    for (_, idxs) in &g.constraints {
        for &v in idxs {
            degree[v] += 1;
        }
    }
    let forward: Vec<usize> = (0..n).collect();
    let backward: Vec<usize> = (0..n).rev().collect();
    let mut by_degree_asc = forward.clone();
    by_degree_asc.sort_by_key(|&v| (degree[v], v));
    let mut by_degree_desc = forward.clone();
    by_degree_desc.sort_by_key(|&v| (usize::MAX - degree[v], v));
    vec![forward, backward, by_degree_asc, by_degree_desc]
}

/// One greedy run: repeatedly deletes the first vertex (in the order given by
/// `order_of`) whose removal keeps the grounding unsatisfiable, until no
/// single deletion does. The result is 1-minimal.
fn greedy_shrink(
    instance: &DefinableInstance,
    mut ground: GroundInstance,
    order_index: usize,
    budget: u64,
) -> Result<GroundInstance, CertError> {
    'passes: loop {
        let order = removal_orders(&ground).swap_remove(order_index);
        for v in order {
            let candidate = remove_vertex(&ground, v);
            let csp = FiniteCsp::from_ground(&candidate, &instance.domain);
            let still_unsat = brute_force(&csp, budget)
                .map_err(|e| CertError::Budget {
                    pool_size: ground.pool.len(),
                    source: e,
                })?
                .is_none();
            if still_unsat {
                ground = candidate;
                continue 'passes;
            }
        }
        return Ok(ground);
    }
}

/// The subinstance induced by keeping exactly the vertices in `keep`
/// (sorted, distinct): kept vertices reindexed, constraints restricted to
/// those entirely within `keep`.
fn induced(g: &GroundInstance, keep: &[usize]) -> GroundInstance {
    let vertices: Vec<_> = keep.iter().map(|&v| g.vertices[v].clone()).collect();
    let reindex: BTreeMap<usize, usize> = keep.iter().copied().zip(0..).collect();
    let constraints: Vec<_> = g
        .constraints
        .iter()
        .filter(|(_, idxs)| idxs.iter().all(|v| reindex.contains_key(v)))
        .map(|(rel, idxs)| (rel.clone(), idxs.iter().map(|v| reindex[v]).collect()))
        .collect();
    GroundInstance {
        vertices,
        constraints,
        pool: g.pool.clone(),
    }
}

/// Number of size-`k` subsets of an `n`-set, saturating.
fn binomial(n: usize, k: usize) -> u64 {
    let mut acc: u64 = 1;
    for i in 0..k.min(n - k) {
        acc = acc
            .saturating_mul((n - i) as u64)
            .checked_div((i + 1) as u64)
            .unwrap_or(u64::MAX);
        if acc == u64::MAX {
            return acc;
        }
    }
    if k > n {
        0
    } else {
        acc
    }
}

/// Subset-count cap for the exact minimization phase of [`shrink`].
const EXACT_SUBSET_CAP: u64 = 300_000;

/// The first (lexicographic) size-`k` induced subinstance of `g` that the
/// oracle refutes, if any.
fn unsat_subset_of_size(
    instance: &DefinableInstance,
    g: &GroundInstance,
    k: usize,
    budget: u64,
) -> Result<Option<GroundInstance>, CertError> {
    let n = g.vertices.len();
    let mut keep: Vec<usize> = (0..k).collect();
    let mut position = vec![usize::MAX; n]; // vertex -> slot in keep, or MAX
    loop {
        for p in position.iter_mut() {
            *p = usize::MAX;
        }
        for (slot, &v) in keep.iter().enumerate() {
            position[v] = slot;
        }
        let constraints: Vec<(String, Vec<usize>)> = g
            .constraints
            .iter()
            .filter(|(_, idxs)| idxs.iter().all(|&v| position[v] != usize::MAX))
            .map(|(rel, idxs)| (rel.clone(), idxs.iter().map(|&v| position[v]).collect()))
            .collect();
        let refuted = brute_force_parts(&instance.domain, k, &constraints, budget)
            .map_err(|e| CertError::Budget {
                pool_size: g.pool.len(),
                source: e,
            })?
            .is_none();
        if refuted {
            return Ok(Some(induced(g, &keep)));
        }
        // next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(None);
            }
            i -= 1;
            if keep[i] < n - (k - i) {
                keep[i] += 1;
                for j in i + 1..k {
                    keep[j] = keep[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Minimization: greedy 1-minimization under several deterministic deletion
/// orders (declaration order, reverse, by constraint degree both ways)
/// keeping the smallest result, then a bounded exact phase that scans all
/// strictly smaller subsets of the original grounding while the subset count
/// stays under a fixed cap. The result is at least 1-minimal; when the exact
/// phase ran to completion it is a true minimum.
pub fn shrink(
    instance: &DefinableInstance,
    cert: &UnsatCertificate,
    budget: u64,
) -> Result<UnsatCertificate, CertError> {
    let mut best: Option<GroundInstance> = None;
    let n_orders = removal_orders(&cert.ground).len();
    for order_index in 0..n_orders {
        let shrunk = greedy_shrink(instance, cert.ground.clone(), order_index, budget)?;
        let better = best
            .as_ref()
            .map(|b| shrunk.vertices.len() < b.vertices.len())
            .unwrap_or(true);
        if better {
            best = Some(shrunk);
        }
    }
    let mut best = best.expect("at least one order");
    let n = cert.ground.vertices.len();
    while best.vertices.len() > 1 {
        let k = best.vertices.len() - 1;
        if binomial(n, k) > EXACT_SUBSET_CAP {
            break;
        }
        match unsat_subset_of_size(instance, &cert.ground, k, budget)? {
            Some(smaller) => best = smaller,
            None => break,
        }
    }
    Ok(UnsatCertificate {
        pool: cert.pool.clone(),
        ground: best,
        minimal: true,
    })
}

/// Independent check: the grounding must be a genuine subinstance of the
/// definable instance (vertices satisfy their builder guards over the pool,
/// constraints are implied by some family guard) and the exhaustive oracle
/// must confirm there is no homomorphism.
pub fn verify(
    instance: &DefinableInstance,
    cert: &UnsatCertificate,
    budget: u64,
) -> Result<bool, CertError> {
    let g = &cert.ground;
    for (builder, tuple) in &g.vertices {
        let b = match instance.variables.builder(builder) {
            Some(b) => b,
            None => return Ok(false),
        };
        if tuple.len() != b.dimension {
            return Ok(false);
        }
        if tuple.iter().any(|a| !cert.pool.contains(a)) {
            return Ok(false);
        }
        match b.guard.eval_ground(tuple, &instance.ctx) {
            Ok(true) => {}
            _ => return Ok(false),
        }
    }
    for (rel, idxs) in &g.constraints {
        if idxs.iter().any(|&v| v >= g.vertices.len()) {
            return Ok(false);
        }
        let implied = instance.families.iter().any(|fam| {
            if fam.relation != *rel || fam.scope.len() != idxs.len() {
                return false;
            }
            let builders_match = idxs
                .iter()
                .zip(&fam.scope)
                .all(|(&v, bname)| g.vertices[v].0 == *bname);
            if !builders_match {
                return false;
            }
            let concat: Vec<Atom> = idxs
                .iter()
                .flat_map(|&v| g.vertices[v].1.iter().cloned())
                .collect();
            fam.guard.eval_ground(&concat, &instance.ctx) == Ok(true)
        });
        if !implied {
            return Ok(false);
        }
    }
    let csp = FiniteCsp::from_ground(g, &instance.domain);
    let refuted = brute_force(&csp, budget)
        .map_err(|e| CertError::Budget {
            pool_size: cert.pool.len(),
            source: e,
        })?
        .is_none();
    Ok(refuted)
}
