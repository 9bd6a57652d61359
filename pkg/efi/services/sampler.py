"""
Adaptive Latent Sampler

Alternates a Langevin (SGLD) or Hamiltonian (SGHMC) step on the imputed
latents Z with a stochastic-gradient step on the network weights w, and
collects the network's mean estimate after burn-in.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from efi.core.errors import DataError, DivergenceError, DomainError
from efi.core.rng import RngStreams
from efi.schemas.energy import EnergyConfig
from efi.schemas.experiment import ExperimentConfig, config_hash
from efi.schemas.network import NetworkShape
from efi.schemas.prior import MixturePrior
from efi.schemas.sampler import SamplerConfig, Schedule, SchedulePhase, TemperingPlan
from efi.schemas.samples import FiducialSamples
from efi.services import nn_core
from efi.services.energy import EnergyModel
from efi.services.models import (
    GAUSSIAN,
    Dataset,
    ErrorFamily,
    ModelFamily,
    split_groups,
)
from efi.services.prior import grad_log_prior

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "iteration",
    "energy",
    "penalty",
    "discrepancy",
    "eps",
    "gamma",
    "tau",
    "lambda",
]


# ── Schedules ──────────────────────────────────────────────────────────────


def _check_iteration(k: int) -> None:
    if k < 1:
        raise DomainError(f"iteration index must be >= 1, got {k}")


def lr_at(schedule: Schedule, k: int) -> float:
    """Latent step size eps_k = C_eps / (c_eps + k^alpha)."""
    _check_iteration(k)
    return schedule.C_eps / (schedule.c_eps + float(k) ** schedule.alpha)


def step_at(schedule: Schedule, k: int) -> float:
    """Weight step size gamma_k = C_gamma / (c_gamma + k^beta)."""
    _check_iteration(k)
    return schedule.C_gamma / (schedule.c_gamma + float(k) ** schedule.beta)


def phase_at(phases: Sequence[SchedulePhase], k: int) -> Schedule:
    _check_iteration(k)
    current = phases[0]
    for phase in phases[1:]:
        if phase.start > k:
            break
        current = phase
    return current


def tau_at(plan: TemperingPlan, k: int) -> float:
    if plan.kind == "constant":
        return plan.tau
    return max(plan.T0 * plan.decay**k, plan.floor)


def lambda_at(plan: TemperingPlan, lam: float, k: int) -> float:
    ramp = plan.lambda_ramp
    if ramp is None:
        return lam
    frac = min(k / ramp.iterations, 1.0)
    return ramp.lambda0 + (lam - ramp.lambda0) * frac


# ── State and single steps ─────────────────────────────────────────────────


@dataclass
class ChainState:
    Z: np.ndarray
    w: np.ndarray
    k: int
    rng: RngStreams
    V: Optional[np.ndarray] = None


def score_z(errors: ErrorFamily, Z: np.ndarray) -> np.ndarray:
    """Gradient of the latent prior log-density."""
    return errors.score(Z)


def _require_finite(values: np.ndarray, what: str, k: int) -> None:
    if not np.all(np.isfinite(values)):
        raise DivergenceError(f"non-finite {what}", iteration=k)


def sgld_step(state: ChainState, grad_log_target: np.ndarray, eps: float, tau: float) -> ChainState:
    """Z' = Z + eps * grad + sqrt(2 tau eps) e."""
    if eps <= 0 or tau < 0:
        raise DomainError(f"need eps > 0 and tau >= 0 (got eps={eps}, tau={tau})")
    _require_finite(grad_log_target, "latent gradient", state.k)
    noise = state.rng.z_noise.standard_normal(state.Z.shape)
    move = eps * grad_log_target + np.sqrt(2.0 * tau * eps) * noise
    Z = state.Z + move
    _require_finite(Z, "latent update", state.k)
    return replace(state, Z=Z)


def sghmc_step(
    state: ChainState, grad_log_target: np.ndarray, eps: float, tau: float, zeta: float
) -> ChainState:
    """V' = (1 - zeta) V + eps * grad + sqrt(2 zeta tau eps) e; Z' = Z + V'."""
    if eps <= 0 or tau < 0 or not 0 < zeta <= 1:
        raise DomainError(f"need eps > 0, tau >= 0, 0 < zeta <= 1 (got {eps}, {tau}, {zeta})")
    _require_finite(grad_log_target, "latent gradient", state.k)
    V = np.zeros_like(state.Z) if state.V is None else state.V
    noise = state.rng.z_noise.standard_normal(state.Z.shape)
    V_new = (1.0 - zeta) * V + eps * grad_log_target + np.sqrt(2.0 * zeta * tau * eps) * noise
    Z = state.Z + V_new
    _require_finite(Z, "latent update", state.k)
    return replace(state, Z=Z, V=V_new)


def sgd_w_step(
    state: ChainState, grad_loglik_w: np.ndarray, grad_logprior_w: np.ndarray, gamma: float
) -> ChainState:
    """w' = w + gamma * (minibatch log-likelihood gradient + log-prior gradient)."""
    if gamma <= 0:
        raise DomainError(f"need gamma > 0 (got {gamma})")
    w = state.w + gamma * (grad_loglik_w + grad_logprior_w)
    _require_finite(w, "weight update", state.k)
    return replace(state, w=w)


# ── Chain ──────────────────────────────────────────────────────────────────


def _as_phases(schedule: Union[Schedule, Sequence[SchedulePhase]]) -> List[SchedulePhase]:
    if isinstance(schedule, Schedule) and not isinstance(schedule, SchedulePhase):
        return [SchedulePhase(**schedule.model_dump())]
    if isinstance(schedule, SchedulePhase):
        return [schedule]
    return list(schedule)


def _minibatch(rng: np.random.Generator, n: int, size: Optional[int]) -> Optional[np.ndarray]:
    if size is None or size >= n:
        return None
    return np.sort(rng.choice(n, size=size, replace=False))


def run_chain(
    dataset: Dataset,
    family: ModelFamily,
    energy_config: EnergyConfig,
    schedule: Union[Schedule, Sequence[SchedulePhase]],
    sampler: SamplerConfig,
    prior: MixturePrior,
    net_shape: NetworkShape,
    burnin: int,
    iterations: int,
    thin: int,
    seed: int,
) -> FiducialSamples:
    """Run one chain and collect theta_bar every ``thin`` iterations after burn-in."""
    if burnin < 0 or iterations < 0 or thin < 1:
        raise DomainError("need burnin >= 0, iterations >= 0 and thin >= 1")
    if dataset.n < 1:
        raise DataError("cannot run a chain on an empty dataset")

    model = EnergyModel(family, dataset, net_shape, energy_config)
    phases = _as_phases(schedule)
    plan = sampler.tempering
    rng = RngStreams(seed)
    n = dataset.n
    scale = 1.0 / n if sampler.scale_by_n else 1.0

    Z0 = family.errors.sample(rng.init, (n, family.n_latent))
    w0 = nn_core.init_weights(net_shape, rng.integer_seed("init"))
    state = ChainState(Z=Z0, w=w0, k=0, rng=rng)

    total = burnin + iterations
    trace = np.zeros((total, len(TRACE_COLUMNS)))
    draws: List[np.ndarray] = []
    latents: List[np.ndarray] = []
    last_energy: Optional[float] = None
    started = time.perf_counter()
    logger.info(
        "chain start: family=%s n=%d K=%d M=%d B=%d sampler=%s seed=%d",
        family.name,
        n,
        burnin,
        iterations,
        thin,
        sampler.algorithm,
        seed,
    )

    try:
        ev = model.evaluate(state.Z, state.w)
        for k in range(1, total + 1):
            state = replace(state, k=k)
            phase = phase_at(phases, k)
            eps = lr_at(phase, k) * scale
            gamma = step_at(phase, k) * scale
            tau = tau_at(plan, k)
            lam = lambda_at(plan, energy_config.lam, k)

            if not np.isfinite(ev.terms.total):
                raise DivergenceError("non-finite energy", k, last_energy)
            last_energy = ev.terms.total
            trace[k - 1] = (
                k,
                ev.terms.total,
                ev.terms.penalty,
                ev.terms.discrepancy,
                eps,
                gamma,
                tau,
                lam,
            )

            # latent move
            grad_z = score_z(family.errors, state.Z) - lam * model.grad_z(ev)
            if sampler.algorithm == "sghmc":
                state = sghmc_step(state, grad_z, eps, tau, plan.zeta)
            else:
                state = sgld_step(state, grad_z, eps, tau)

            # weight move at the new latents
            ev_mid = model.evaluate(state.Z, state.w)
            batch = _minibatch(rng.minibatch, n, sampler.minibatch_size)
            grad_lik = -lam * model.grad_w(ev_mid, batch)
            state = sgd_w_step(state, grad_lik, grad_log_prior(state.w, prior), gamma)

            ev = model.evaluate(state.Z, state.w)
            if k > burnin and (k - burnin) % thin == 0:
                draws.append(family.to_natural(ev.theta_bar))
                if sampler.latent_snapshots:
                    latents.append(state.Z.copy())
                    del latents[: -sampler.latent_snapshots]

            if k % sampler.log_every == 0:
                logger.debug(
                    "iteration %d: energy=%.6g eps=%.3g gamma=%.3g tau=%.3g lambda=%.3g",
                    k,
                    ev.terms.total,
                    eps,
                    gamma,
                    tau,
                    lam,
                )
    except DivergenceError as exc:
        iteration = state.k if exc.iteration is None else exc.iteration
        logger.error("chain diverged at iteration %d: %s", iteration, exc.reason)
        raise DivergenceError(exc.reason, iteration, last_energy) from exc

    elapsed = time.perf_counter() - started
    logger.info("chain done: %d draws in %.1fs", len(draws), elapsed)

    draw_matrix = np.array(draws).reshape(-1, family.d_theta)
    return FiducialSamples(
        draws=draw_matrix,
        param_names=family.param_names,
        derived=family.derived_quantities(draw_matrix) if draws else {},
        meta={
            "family": family.name,
            "burnin": burnin,
            "iterations": iterations,
            "thin": thin,
            "seed": seed,
            "lambda": energy_config.lam,
            "eta": energy_config.eta,
            "variant": energy_config.variant,
            "network": list(net_shape.layer_widths),
            "runtime_seconds": elapsed,
        },
        trace=pd.DataFrame(trace, columns=TRACE_COLUMNS).astype({"iteration": int}),
        latents=latents,
    )


def _pair_chains(family: ModelFamily, parts: List[FiducialSamples]) -> FiducialSamples:
    """Join per-group chains column-wise, pairing rows by draw index."""
    rows = min(part.n_draws for part in parts)
    draws = np.hstack([part.draws[:rows] for part in parts])
    trace = pd.concat(
        [part.trace.assign(chain=i + 1) for i, part in enumerate(parts) if part.trace is not None],
        ignore_index=True,
    )
    meta = dict(parts[0].meta)
    meta["family"] = family.name
    meta["runtime_seconds"] = sum(part.meta.get("runtime_seconds", 0.0) for part in parts)
    return FiducialSamples(
        draws=draws,
        param_names=family.param_names,
        derived=family.derived_quantities(draws) if rows else {},
        meta=meta,
        trace=trace,
        latents=[np.vstack(snaps) for snaps in zip(*(part.latents for part in parts))],
    )


def run_efi(
    dataset: Dataset,
    family: ModelFamily,
    config: ExperimentConfig,
    seed: Optional[int] = None,
    threads: int = 1,
) -> FiducialSamples:
    """
    Run the chain(s) an experiment needs; two-group families get one chain per
    group, spread over at most ``threads`` workers. Draws do not depend on
    ``threads``.
    """
    seed = config.seed if seed is None else seed
    run = config.run

    def one(data: Dataset, fam: ModelFamily, chain_seed: int) -> FiducialSamples:
        return run_chain(
            data,
            fam,
            config.energy,
            config.schedule,
            config.sampler,
            config.prior,
            config.network,
            run.burnin,
            run.iterations,
            run.thin,
            chain_seed,
        )

    if family.composite:
        family.check_dataset(dataset)
        groups = split_groups(dataset)
        seeds = np.random.SeedSequence(seed).generate_state(len(groups))
        parts = Parallel(n_jobs=min(threads, len(groups)), prefer="threads")(
            delayed(one)(group, component, int(s))
            for group, component, s in zip(groups, family.components(), seeds)  # type: ignore[attr-defined]
        )
        samples = _pair_chains(family, parts)
    else:
        samples = one(dataset, family, seed)
    samples.meta["config_hash"] = config_hash(config)
    samples.meta["experiment"] = config.name
    return samples


# ── Exact-inverse validation chain ─────────────────────────────────────────


def run_exact_inverse_chain(
    dataset: Dataset,
    sigma: float,
    lam: float,
    schedule: Schedule,
    burnin: int,
    iterations: int,
    thin: int,
    seed: int,
    tau: float = 1.0,
) -> FiducialSamples:
    """
    SGLD over Z for the known-sigma linear model with the least-squares inverse
    G(Y, X, Z) = (X'X)^{-1} X'(Y - sigma Z) in place of the network.

    Every observation shares one estimate, so the energy reduces to
    ||(I - H)(Y - sigma Z)||^2.
    """
    X = dataset.X
    y = dataset.Y[:, 0]
    n, p = X.shape
    if n <= p:
        raise DataError("need more observations than design columns")
    Q, _ = np.linalg.qr(X)
    gram_inv_xt = np.linalg.solve(X.T @ X, X.T)

    def resid(z: np.ndarray) -> np.ndarray:
        v = y - sigma * z
        return v - Q @ (Q.T @ v)

    rng = RngStreams(seed)
    state = ChainState(Z=GAUSSIAN.sample(rng.init, (n, 1)), w=np.zeros(0), k=0, rng=rng)
    draws = []
    energies = np.zeros(burnin + iterations)
    for k in range(1, burnin + iterations + 1):
        state = replace(state, k=k)
        r = resid(state.Z[:, 0])
        energies[k - 1] = float(r @ r)
        grad_u = -2.0 * sigma * r
        grad = GAUSSIAN.score(state.Z) - lam * grad_u[:, None]
        state = sgld_step(state, grad, lr_at(schedule, k), tau)
        if k > burnin and (k - burnin) % thin == 0:
            draws.append(gram_inv_xt @ (y - sigma * state.Z[:, 0]))

    names = [f"beta{j}" for j in range(p)]
    return FiducialSamples(
        draws=np.array(draws).reshape(-1, p),
        param_names=names,
        meta={"family": "linear_known_sigma", "inverse": "least_squares", "seed": seed},
        trace=pd.DataFrame({"iteration": np.arange(1, len(energies) + 1), "energy": energies}),
    )


def chain_summary(samples: FiducialSamples) -> Dict[str, float]:
    if samples.trace is None or samples.trace.empty:
        return {}
    return {
        "final_energy": float(samples.trace["energy"].iloc[-1]),
        "min_energy": float(samples.trace["energy"].min()),
    }
