"""Gaussian-mixture MAP estimation for degraded patches.

Each structure class is one Gaussian model (mean, covariance, eigenbasis).
Restoring a patch means computing the Wiener-type MAP estimate under every
model and keeping the one with the lowest penalized energy; EM alternates
that per-patch step with re-estimation of each winning cluster's mean and
covariance.

The linear solves go through the push-through form
``W = Sigma U^T (U Sigma U^T + sigma^2 I)^{-1}``, whose inner matrix is
symmetric positive definite whenever sigma > 0, so no covariance is ever
inverted directly. A second estimator route solves for sparse coefficients
in the model's eigenbasis; the two routes are kept separate on purpose so
they can cross-check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .operators import PatchOperatorMatrix
from .patchwork import Patch

# route threshold: signature groups at least this big get a shared Wiener
# matrix; smaller diagonal groups are batched into one stacked solve
_MIN_W_GROUP = 8


class NumericalError(RuntimeError):
    """SPD factorization failed; carries the offending Cholesky pivot."""

    def __init__(self, message: str, pivot: float):
        super().__init__(f"{message} (smallest Cholesky pivot {pivot:.6e})")
        self.pivot = pivot


def _failing_pivot(matrix: np.ndarray) -> float:
    """Rerun a plain Cholesky to recover the first nonpositive pivot value."""
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    low = np.zeros_like(a)
    smallest = math.inf
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        smallest = min(smallest, pivot)
        if pivot <= 0:
            return float(pivot)
        low[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return float(smallest)


def _spd_factor(matrix: np.ndarray, context: str):
    try:
        return cho_factor(matrix, lower=True)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{context}: matrix is not positive definite", _failing_pivot(matrix))


@dataclass
class GaussianModel:
    """One mixture component.

    `basis` columns are the covariance eigenvectors, most energetic first;
    `eigenvalues` are the matching variances, descending and floored at
    `epsilon`; `covariance` is exactly basis @ diag(eigenvalues) @ basis.T
    and `log_det` is the sum of log eigenvalues.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    covariance: np.ndarray
    log_det: float
    epsilon: float
    kind: str = "learned"
    angle: float | None = None
    position: int | None = None

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @staticmethod
    def from_covariance(
        mean: np.ndarray,
        covariance: np.ndarray,
        epsilon: float,
        kind: str = "learned",
        angle: float | None = None,
        position: int | None = None,
    ) -> "GaussianModel":
        """Eigendecompose a (regularized) covariance; eigenvalues get a final
        floor at epsilon and the stored covariance is the recomposition, so
        the model invariants hold exactly."""
        mean = np.asarray(mean, dtype=np.float64)
        w, v = np.linalg.eigh(np.asarray(covariance, dtype=np.float64))
        w = np.maximum(w[::-1], epsilon)
        v = np.ascontiguousarray(v[:, ::-1])
        return GaussianModel.from_basis(mean, v, w, epsilon, kind, angle, position)

    @staticmethod
    def from_basis(
        mean: np.ndarray,
        basis: np.ndarray,
        eigenvalues: np.ndarray,
        epsilon: float,
        kind: str = "learned",
        angle: float | None = None,
        position: int | None = None,
    ) -> "GaussianModel":
        mean = np.asarray(mean, dtype=np.float64)
        basis = np.asarray(basis, dtype=np.float64)
        eig = np.maximum(np.asarray(eigenvalues, dtype=np.float64), epsilon)
        cov = (basis * eig) @ basis.T
        log_det = float(np.sum(np.log(eig)))
        return GaussianModel(mean, basis, eig, cov, log_det, epsilon, kind, angle, position)


def check_model_invariants(model: GaussianModel, tol: float = 1e-8) -> None:
    """Raise ValueError if any structural invariant is broken."""
    n = model.dim
    problems = []
    gram = model.basis.T @ model.basis
    if np.max(np.abs(gram - np.eye(n))) > tol:
        problems.append("basis columns are not orthonormal")
    recomposed = (model.basis * model.eigenvalues) @ model.basis.T
    scale = max(1.0, float(np.max(np.abs(model.covariance))))
    if np.max(np.abs(model.covariance - recomposed)) > tol * scale:
        problems.append("covariance does not match basis/eigenvalue recomposition")
    if np.any(np.diff(model.eigenvalues) > tol):
        problems.append("eigenvalues are not sorted descending")
    if np.any(model.eigenvalues < model.epsilon - tol):
        problems.append(f"eigenvalues fall below the floor {model.epsilon}")
    if abs(model.log_det - float(np.sum(np.log(model.eigenvalues)))) > 1e-8 * max(
        1.0, abs(model.log_det)
    ):
        problems.append("log_det does not match the eigenvalues")
    if problems:
        raise ValueError("; ".join(problems))


@dataclass
class EmConfig:
    """Knobs for the EM restoration loop."""

    patch_side: int = 8
    stride: int = 1
    sigma: float = 3.0
    epsilon: float = 30.0
    iterations: int = 5
    n_directions: int = 18
    n_positions: int = 12

    @property
    def n_models(self) -> int:
        # directional models plus the oscillatory (DCT) one
        return self.n_directions + 1


def _op_matrix(op) -> np.ndarray:
    if isinstance(op, PatchOperatorMatrix):
        return op.dense()
    return np.asarray(op, dtype=np.float64)


def wiener_matrix(op, model: GaussianModel, sigma: float) -> np.ndarray:
    """Linear MAP filter W = Sigma U^T (U Sigma U^T + sigma^2 I)^{-1}."""
    u = _op_matrix(op)
    b = u @ model.covariance  # (n_out, n)
    a = b @ u.T
    a[np.diag_indices_from(a)] += sigma * sigma
    factor = _spd_factor(a, "wiener filter")
    return cho_solve(factor, b).T


def patch_energy(y: np.ndarray, op, model: GaussianModel, estimate: np.ndarray, sigma: float) -> float:
    """Penalized energy of an estimate: data term plus sigma^2 * (prior in
    eigen-coordinates + log-determinant)."""
    u = _op_matrix(op)
    resid = u @ estimate - y
    coef = model.basis.T @ (estimate - model.mean)
    prior = float(np.sum(coef * coef / model.eigenvalues))
    return float(resid @ resid) + sigma * sigma * (prior + model.log_det)


def estimate_patch(y: np.ndarray, op, model: GaussianModel, sigma: float) -> tuple[np.ndarray, float]:
    """MAP estimate under one model: f = mu + W (y - U mu), with its energy."""
    y = np.asarray(y, dtype=np.float64)
    u = _op_matrix(op)
    w = wiener_matrix(op, model, sigma)
    f = model.mean + w @ (y - u @ model.mean)
    return f, patch_energy(y, op, model, f, sigma)


def estimate_patch_pca(
    y: np.ndarray, op, model: GaussianModel, sigma: float
) -> tuple[np.ndarray, np.ndarray]:
    """Dual route: ridge solve for eigen-coefficients a, then f = mu + B a.

    Minimizes ||U(mu + B a) - y||^2 + sigma^2 sum_m a_m^2 / lambda_m. Kept
    algorithmically independent of the Wiener route for cross-checking.
    """
    y = np.asarray(y, dtype=np.float64)
    u = _op_matrix(op)
    g = u @ model.basis
    a = g.T @ g
    a[np.diag_indices_from(a)] += sigma * sigma / model.eigenvalues
    factor = _spd_factor(a, "coefficient ridge system")
    coeffs = cho_solve(factor, g.T @ (y - u @ model.mean))
    return model.mean + model.basis @ coeffs, coeffs


def select_model(
    y: np.ndarray, op, models: list[GaussianModel], sigma: float
) -> tuple[int, np.ndarray]:
    """Best (lowest-energy) model for one patch; ties keep the lowest index."""
    best = (math.inf, -1, None)
    for k, model in enumerate(models):
        f, energy = estimate_patch(y, op, model, sigma)
        if energy < best[0]:
            best = (energy, k, f)
    return best[1], best[2]


# ---------------------------------------------------------------------------
# batched E-step machinery


def as_matrix(patches) -> np.ndarray:
    """Accept a (P, n) array or a list of Patch objects."""
    if isinstance(patches, np.ndarray):
        return np.asarray(patches, dtype=np.float64)
    if patches and isinstance(patches[0], Patch):
        return np.stack([p.values for p in patches]).astype(np.float64, copy=False)
    return np.asarray(patches, dtype=np.float64)


@dataclass
class _GroupPlan:
    """Patches partitioned by operator signature into two solve routes."""

    w_groups: list[tuple[PatchOperatorMatrix, np.ndarray]]
    diag_idx: np.ndarray
    diag_rows: np.ndarray  # stacked diagonals, aligned with diag_idx

    @property
    def n_groups(self) -> int:
        return len(self.w_groups) + (1 if self.diag_idx.size else 0)


def plan_groups(ops, count: int) -> _GroupPlan:
    if isinstance(ops, PatchOperatorMatrix):
        ops = [ops] * count
    if len(ops) != count:
        raise ValueError(f"{len(ops)} operators for {count} patches")
    by_sig: dict[str, list[int]] = {}
    pom_of: dict[str, PatchOperatorMatrix] = {}
    for i, pom in enumerate(ops):
        by_sig.setdefault(pom.signature, []).append(i)
        pom_of.setdefault(pom.signature, pom)
    w_groups = []
    diag_parts = []
    for sig in sorted(by_sig):
        pom, idx = pom_of[sig], np.asarray(by_sig[sig], dtype=np.int64)
        if pom.diag is not None and idx.size < _MIN_W_GROUP:
            diag_parts.append((idx, pom.diag))
        else:
            w_groups.append((pom, idx))
    if diag_parts:
        diag_idx = np.concatenate([idx for idx, _ in diag_parts])
        diag_rows = np.concatenate([np.tile(d, (idx.size, 1)) for idx, d in diag_parts])
        order = np.argsort(diag_idx, kind="stable")
        diag_idx = diag_idx[order]
        diag_rows = diag_rows[order]
    else:
        diag_idx = np.empty(0, dtype=np.int64)
        diag_rows = np.empty((0, 0))
    return _GroupPlan(w_groups, diag_idx, diag_rows)


class EStepCache:
    """Memo for Wiener matrices, keyed by (model epoch, model index,
    operator signature). Disabling it only repeats work; results are
    identical either way."""

    def __init__(self):
        self.epoch = None
        self._store: dict[tuple[int, str], np.ndarray] = {}
        self.hits = 0
        self.misses = 0

    def get(self, epoch: int, model_index: int, signature: str):
        if epoch != self.epoch:
            self.epoch = epoch
            self._store.clear()
        w = self._store.get((model_index, signature))
        if w is not None:
            self.hits += 1
        return w

    def put(self, epoch: int, model_index: int, signature: str, w: np.ndarray) -> None:
        if epoch != self.epoch:
            self.epoch = epoch
            self._store.clear()
        self.misses += 1
        self._store[(model_index, signature)] = w


@dataclass
class EStepResult:
    estimates: np.ndarray
    labels: np.ndarray
    energies: np.ndarray
    total_energy: float


def _solve_chunk_size(n: int) -> int:
    # keep the stacked (chunk, n, n) solve around ~60 MB
    return max(16, int(6e7 // (n * n * 8)))


def score_model(
    patches,
    ops,
    model: GaussianModel,
    sigma: float,
    cache: EStepCache | None = None,
    epoch: int = 0,
    model_index: int = 0,
    plan: _GroupPlan | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """MAP estimates and energies of every patch under one model.

    Patches sharing an operator signature share one Wiener matrix; small
    groups of pointwise operators are batched into a stacked solve of
    (D Sigma D + sigma^2 I) z = y - D mu. Requires sigma > 0 when any
    operator loses information.
    """
    y_all = as_matrix(patches)
    count, n = y_all.shape
    if plan is None:
        plan = plan_groups(ops, count)
    sig2 = sigma * sigma
    mean, cov = model.mean, model.covariance

    est = np.empty((count, n))
    data_term = np.empty(count)
    for pom, idx in plan.w_groups:
        w = cache.get(epoch, model_index, pom.signature) if cache is not None else None
        if w is None:
            w = wiener_matrix(pom, model, sigma)
            if cache is not None:
                cache.put(epoch, model_index, pom.signature, w)
        u = pom.dense()
        resid = y_all[idx] - u @ mean
        f = mean + resid @ w.T
        est[idx] = f
        data_term[idx] = np.sum((f @ u.T - y_all[idx]) ** 2, axis=1)
    if plan.diag_idx.size:
        rows = plan.diag_rows
        yd = y_all[plan.diag_idx]
        chunk = _solve_chunk_size(n)
        eye_idx = np.arange(n)
        for a in range(0, plan.diag_idx.size, chunk):
            b = min(a + chunk, plan.diag_idx.size)
            d = rows[a:b]
            lhs = cov[None, :, :] * (d[:, :, None] * d[:, None, :])
            lhs[:, eye_idx, eye_idx] += sig2
            rhs = yd[a:b] - d * mean
            z = np.linalg.solve(lhs, rhs[:, :, None])[:, :, 0]
            f = mean + (d * z) @ cov
            est[plan.diag_idx[a:b]] = f
            data_term[plan.diag_idx[a:b]] = np.sum((d * f - yd[a:b]) ** 2, axis=1)
    coef = (est - mean) @ model.basis
    energy = data_term + sig2 * (coef * coef @ (1.0 / model.eigenvalues) + model.log_det)
    return est, energy


def e_step(
    patches,
    ops,
    models: list[GaussianModel],
    sigma: float,
    cache: EStepCache | None = None,
    epoch: int = 0,
    plan: _GroupPlan | None = None,
) -> EStepResult:
    """Per-patch MAP estimate under every model + lowest-energy selection.

    Ties in energy keep the lowest model index.
    """
    y_all = as_matrix(patches)
    count, n = y_all.shape
    if plan is None:
        plan = plan_groups(ops, count)

    best_energy = np.full(count, np.inf)
    best_est = np.zeros((count, n))
    labels = np.zeros(count, dtype=np.int64)
    for k, model in enumerate(models):
        est, energy = score_model(
            y_all, ops, model, sigma, cache=cache, epoch=epoch, model_index=k, plan=plan
        )
        better = energy < best_energy
        if np.any(better):
            best_energy[better] = energy[better]
            best_est[better] = est[better]
            labels[better] = k
    return EStepResult(best_est, labels, best_energy, float(best_energy.sum()))


def _apply_all_ops(plan: _GroupPlan, estimates: np.ndarray) -> np.ndarray:
    out = np.empty_like(estimates)
    for pom, idx in plan.w_groups:
        out[idx] = estimates[idx] @ pom.dense().T
    if plan.diag_idx.size:
        out[plan.diag_idx] = plan.diag_rows * estimates[plan.diag_idx]
    return out


def evaluate_energies(
    patches,
    ops,
    models: list[GaussianModel],
    labels: np.ndarray,
    estimates: np.ndarray,
    sigma: float,
    plan: _GroupPlan | None = None,
) -> np.ndarray:
    """Energy of given (estimate, model) pairs, without re-estimating."""
    y_all = as_matrix(patches)
    if plan is None:
        plan = plan_groups(ops, y_all.shape[0])
    uf = _apply_all_ops(plan, estimates)
    data = np.sum((uf - y_all) ** 2, axis=1)
    prior = np.zeros(y_all.shape[0])
    logdet = np.zeros(y_all.shape[0])
    for k, model in enumerate(models):
        idx = labels == k
        if not np.any(idx):
            continue
        coef = (estimates[idx] - model.mean) @ model.basis
        prior[idx] = coef * coef @ (1.0 / model.eigenvalues)
        logdet[idx] = model.log_det
    return data + sigma * sigma * (prior + logdet)


def m_step(
    estimates: np.ndarray,
    labels: np.ndarray,
    models: list[GaussianModel],
    epsilon: float,
) -> list[GaussianModel]:
    """Re-estimate each cluster's mean and covariance (+ epsilon*Id), keeping
    empty clusters' previous models verbatim."""
    out = []
    n = estimates.shape[1]
    for k, prior in enumerate(models):
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            out.append(prior)
            continue
        x = estimates[idx]
        mean = x.mean(axis=0)
        xc = x - mean
        cov = (xc.T @ xc) / idx.size
        cov[np.diag_indices_from(cov)] += epsilon
        out.append(
            GaussianModel.from_covariance(
                mean, cov, epsilon, kind=prior.kind, angle=prior.angle, position=prior.position
            )
        )
    return out


@dataclass
class EmTrace:
    """Per-iteration record of a MAP-EM run."""

    total_energies: list[float] = field(default_factory=list)
    occupancies: list[np.ndarray] = field(default_factory=list)
    previous_under_current: list[float | None] = field(default_factory=list)
    model_snapshots: list[list[GaussianModel]] | None = None


@dataclass
class MapEmResult:
    estimates: np.ndarray
    labels: np.ndarray
    models: list[GaussianModel]
    trace: EmTrace


def map_em(
    patches,
    ops,
    models: list[GaussianModel],
    config: EmConfig,
    callback=None,
    cache: bool = True,
    keep_model_snapshots: bool = False,
) -> MapEmResult:
    """Alternate E and M steps for config.iterations rounds.

    The trace records, per iteration, the E-step total energy, cluster
    occupancy, and the previous iteration's estimates re-scored under the
    current models (the within-iteration improvement statement).
    """
    y_all = as_matrix(patches)
    plan = plan_groups(ops, y_all.shape[0])
    memo = EStepCache() if cache else None
    trace = EmTrace(model_snapshots=[] if keep_model_snapshots else None)
    prev: EStepResult | None = None
    for it in range(config.iterations):
        res = e_step(y_all, ops, models, config.sigma, cache=memo, epoch=it, plan=plan)
        if prev is None:
            trace.previous_under_current.append(None)
        else:
            rescored = evaluate_energies(
                y_all, ops, models, prev.labels, prev.estimates, config.sigma, plan=plan
            )
            trace.previous_under_current.append(float(rescored.sum()))
        trace.total_energies.append(res.total_energy)
        trace.occupancies.append(np.bincount(res.labels, minlength=len(models)))
        if callback is not None:
            callback(it, res)
        models = m_step(res.estimates, res.labels, models, config.epsilon)
        if keep_model_snapshots:
            trace.model_snapshots.append(models)
        prev = res
    return MapEmResult(prev.estimates, prev.labels, models, trace)


# ---------------------------------------------------------------------------
# two-layer (direction, then position) selection


@dataclass
class HierarchicalEStep:
    estimates: np.ndarray
    direction_labels: np.ndarray
    position_labels: np.ndarray
    energies: np.ndarray
    total_energy: float
    evaluations: np.ndarray  # models scored per patch (layer 1 + layer 2)


def e_step_hierarchical(
    patches,
    ops,
    models: list[GaussianModel],
    position_models: list[list[GaussianModel]],
    sigma: float,
    cache: EStepCache | None = None,
    epoch: int = 0,
    plan: _GroupPlan | None = None,
) -> HierarchicalEStep:
    """Coarse-to-fine selection: pick a direction with the layer-1 models,
    then refine among that direction's position models only. Each patch is
    scored against len(models) + len(position_models[k]) candidates instead
    of the full product."""
    if len(position_models) != len(models):
        raise ValueError("need one position family per layer-1 model")
    y_all = as_matrix(patches)
    count, n = y_all.shape
    if plan is None:
        plan = plan_groups(ops, count)
    layer1 = e_step(y_all, ops, models, sigma, cache=cache, epoch=epoch, plan=plan)

    shared = isinstance(ops, PatchOperatorMatrix)
    estimates = np.empty((count, n))
    pos_labels = np.zeros(count, dtype=np.int64)
    energies = np.empty(count)
    evaluations = np.full(count, len(models), dtype=np.int64)
    for k in range(len(models)):
        idx = np.flatnonzero(layer1.labels == k)
        if idx.size == 0:
            continue
        family = position_models[k]
        sub_ops = ops if shared else [ops[i] for i in idx]
        sub = e_step(
            y_all[idx],
            sub_ops,
            family,
            sigma,
            cache=cache,
            epoch=(epoch + 1) * 1000 + k if cache is not None else 0,
        )
        estimates[idx] = sub.estimates
        pos_labels[idx] = sub.labels
        energies[idx] = sub.energies
        evaluations[idx] += len(family)
    return HierarchicalEStep(
        estimates,
        layer1.labels,
        pos_labels,
        energies,
        float(energies.sum()),
        evaluations,
    )


@dataclass
class HierarchicalResult:
    direction: int
    position: int
    estimate: np.ndarray
    evaluations: int


def hierarchical_select(
    y: np.ndarray,
    op,
    models: list[GaussianModel],
    position_models: list[list[GaussianModel]],
    sigma: float,
) -> HierarchicalResult:
    """Single-patch version of the two-layer selection."""
    k, _ = select_model(y, op, models, sigma)
    family = position_models[k]
    p, f = select_model(y, op, family, sigma)
    return HierarchicalResult(k, p, f, len(models) + len(family))


def m_step_hierarchical(
    estimates: np.ndarray,
    direction_labels: np.ndarray,
    position_labels: np.ndarray,
    models: list[GaussianModel],
    position_models: list[list[GaussianModel]],
    epsilon: float,
) -> tuple[list[GaussianModel], list[list[GaussianModel]]]:
    """Update both layers from the same estimates.

    Layer 1 refits each direction model from its full cluster. Layer 2
    refits only the means: each (direction, position) cell gets its own
    empirical mean while sharing the refit direction covariance. A cell
    holds ~N/(K*P) patches, far too few to support a covariance in
    patch-dimension space; per-cell covariance refits collapse to tiny
    log-determinants that hijack model selection. Sharing the direction
    covariance keeps the prior-energy scale identical across a family, so
    position selection is decided by the means alone. Empty cells fall
    back to the direction mean; a direction that won no patches keeps its
    family verbatim, mirroring the empty-cluster rule of m_step.
    """
    new_dir = m_step(estimates, direction_labels, models, epsilon)
    new_pos = []
    for k, family in enumerate(position_models):
        idx = np.flatnonzero(direction_labels == k)
        if idx.size == 0:
            new_pos.append(family)
            continue
        base = new_dir[k]
        cluster = estimates[idx]
        sub = position_labels[idx]
        refit = []
        for p, member in enumerate(family):
            cell = cluster[sub == p]
            mean = cell.mean(axis=0) if len(cell) else base.mean
            refit.append(
                GaussianModel(
                    mean=mean,
                    basis=base.basis,
                    eigenvalues=base.eigenvalues,
                    covariance=base.covariance,
                    log_det=base.log_det,
                    epsilon=base.epsilon,
                    kind=member.kind,
                    angle=member.angle,
                    position=member.position,
                )
            )
        new_pos.append(refit)
    return new_dir, new_pos


@dataclass
class HierarchicalMapEmResult:
    estimates: np.ndarray
    direction_labels: np.ndarray
    position_labels: np.ndarray
    models: list[GaussianModel]
    position_models: list[list[GaussianModel]]
    trace: EmTrace


def map_em_hierarchical(
    patches,
    ops,
    models: list[GaussianModel],
    position_models: list[list[GaussianModel]],
    config: EmConfig,
    callback=None,
    cache: bool = True,
    keep_model_snapshots: bool = False,
) -> HierarchicalMapEmResult:
    y_all = as_matrix(patches)
    plan = plan_groups(ops, y_all.shape[0])
    memo = EStepCache() if cache else None
    trace = EmTrace(model_snapshots=[] if keep_model_snapshots else None)
    prev: HierarchicalEStep | None = None
    flat_prev_models = None
    for it in range(config.iterations):
        res = e_step_hierarchical(
            y_all, ops, models, position_models, config.sigma, cache=memo, epoch=it, plan=plan
        )
        if prev is None:
            trace.previous_under_current.append(None)
        else:
            # score the previous layer-2 choices under the current models
            flat_models = [m for family in position_models for m in family]
            starts = np.cumsum([0] + [len(f) for f in position_models])
            flat_labels = starts[prev.direction_labels] + prev.position_labels
            rescored = evaluate_energies(
                y_all, ops, flat_models, flat_labels, prev.estimates, config.sigma, plan=plan
            )
            trace.previous_under_current.append(float(rescored.sum()))
        trace.total_energies.append(res.total_energy)
        trace.occupancies.append(np.bincount(res.direction_labels, minlength=len(models)))
        if callback is not None:
            callback(it, res)
        models, position_models = m_step_hierarchical(
            res.estimates,
            res.direction_labels,
            res.position_labels,
            models,
            position_models,
            config.epsilon,
        )
        if keep_model_snapshots:
            trace.model_snapshots.append(models)
        prev = res
    return HierarchicalMapEmResult(
        prev.estimates, prev.direction_labels, prev.position_labels, models, position_models, trace
    )


# ---------------------------------------------------------------------------
# model set serialization (binary, little-endian)

_MAGIC = b"PGMMSET1"
_KIND_CODES = {"directional": 0, "dct": 1, "position": 2, "learned": 3}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def _pack_i64(value: int) -> bytes:
    return np.int64(value).astype("<i8").tobytes()


def _pack_f64(arr) -> bytes:
    return np.asarray(arr, dtype=np.float64).astype("<f8").ravel().tobytes()


def _pack_model(model: GaussianModel) -> bytes:
    parts = [
        _pack_i64(_KIND_CODES[model.kind]),
        _pack_f64(math.nan if model.angle is None else model.angle),
        _pack_i64(-1 if model.position is None else model.position),
        _pack_f64(model.epsilon),
        _pack_i64(model.dim),
        _pack_f64(model.mean),
        _pack_f64(model.basis),
        _pack_f64(model.eigenvalues),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def i64(self) -> int:
        v = int(np.frombuffer(self.buf, "<i8", 1, self.pos)[0])
        self.pos += 8
        return v

    def f64(self, count: int = 1) -> np.ndarray:
        v = np.frombuffer(self.buf, "<f8", count, self.pos).copy()
        self.pos += 8 * count
        return v


def _unpack_model(r: _Reader) -> GaussianModel:
    kind = _KIND_NAMES[r.i64()]
    angle = float(r.f64()[0])
    angle = None if math.isnan(angle) else angle
    position = r.i64()
    position = None if position < 0 else position
    epsilon = float(r.f64()[0])
    n = r.i64()
    mean = r.f64(n)
    basis = r.f64(n * n).reshape(n, n)
    eig = r.f64(n)
    return GaussianModel.from_basis(mean, basis, eig, epsilon, kind, angle, position)


def save_models(
    path,
    models: list[GaussianModel],
    position_models: list[list[GaussianModel]] | None = None,
) -> None:
    """Binary sidecar with every model's mean, basis, and eigenvalues."""
    parts = [_MAGIC, _pack_i64(len(models))]
    parts.extend(_pack_model(m) for m in models)
    if position_models is None:
        parts.append(_pack_i64(0))
    else:
        parts.append(_pack_i64(len(position_models)))
        for k, family in enumerate(position_models):
            parts.append(_pack_i64(k))
            parts.append(_pack_i64(len(family)))
            parts.extend(_pack_model(m) for m in family)
    Path(path).write_bytes(b"".join(parts))


def load_models(path):
    """Inverse of save_models: (models, position_models or None)."""
    buf = Path(path).read_bytes()
    if buf[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not a model-set file (bad magic bytes)")
    r = _Reader(buf)
    r.pos = len(_MAGIC)
    models = [_unpack_model(r) for _ in range(r.i64())]
    n_groups = r.i64()
    if n_groups == 0:
        return models, None
    position_models: list[list[GaussianModel]] = [[] for _ in range(n_groups)]
    for _ in range(n_groups):
        k = r.i64()
        count = r.i64()
        position_models[k] = [_unpack_model(r) for _ in range(count)]
    return models, position_models
