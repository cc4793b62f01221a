"""Run orchestration: the per-step channel loop, parallel member evolution,
regeneration cadence, diagnostics, and the shared-noise comparison and
error-estimation protocols.

Determinism contract: a run is bit-identical for any worker count.  Members
are processed in fixed-size blocks whose decomposition depends only on the
ensemble size, workers merely schedule blocks, and every cross-member
reduction is exactly rounded (``math.fsum``), hence independent of
evaluation order.  All randomness comes from counter-based streams addressed
by absolute step index.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from wavemc.ensemble import (
    RegenReport,
    WeightedEnsemble,
    effective_size,
    ensemble_expectation,
    init_uniform,
    observable_average,
    regenerate,
    update_weights,
)
from wavemc.model import ModelSpec
from wavemc.noise import NoiseStreams
from wavemc.reference import me_step, sme_step_direct
from wavemc.steppers import (
    AnnihilationError,
    decoherence_step,
    hamiltonian_drift_step,
    hamiltonian_noise_step,
    measurement_record,
    measurement_step_state,
    normalize_state,
)

MODES = ("mc", "sme", "me", "compare", "error-estimate")

# members per work block; fixed so results cannot depend on the worker count
MEMBER_BLOCK = 1024


@dataclass(eq=False)
class SimulationConfig:
    """Validated inputs for one run.

    ``dt`` must equal ``finest_dt * 2**m`` for integer m >= 0: increments are
    generated at the finest resolution and pair-summed upward, which makes
    half-step comparisons follow the same noise path.  Times are in the
    model's time unit (the oscillator period for the bundled preset) and
    rates in its inverse.
    """

    model: ModelSpec
    initial_state: np.ndarray
    dt: float
    n_steps: int
    n_ens: int
    p_thresh: float
    regen_interval: int
    seed: int
    finest_dt: float
    dv_replicate: int = 0
    mode: str = "mc"
    output_stride: int = 20
    refine: bool = False
    replicates: int = 2
    config_hash: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got '{self.mode}'")
        for name in ("n_steps", "n_ens", "regen_interval", "output_stride"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.dt <= 0 or self.finest_dt <= 0:
            raise ValueError("dt and finest_dt must be positive")
        m = round(math.log2(self.dt / self.finest_dt))
        if m < 0 or self.finest_dt * (2.0**m) != self.dt:
            raise ValueError(
                f"dt = {self.dt!r} must equal finest_dt * 2**m for integer m >= 0 (finest_dt = {self.finest_dt!r})"
            )
        if not 0.0 < self.p_thresh <= 1.0 / self.n_ens:
            raise ValueError(f"p_thresh must lie in (0, 1/n_ens] = (0, {1.0 / self.n_ens!r}], got {self.p_thresh!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.dv_replicate < 0:
            raise ValueError("dv_replicate must be >= 0")
        if self.replicates < 2:
            raise ValueError(f"replicates must be >= 2, got {self.replicates}")
        psi = np.asarray(self.initial_state, dtype=complex)
        if psi.shape != (self.model.dim,):
            raise ValueError(f"initial state length {psi.shape} does not match model dimension {self.model.dim}")
        norm = float(np.linalg.norm(psi))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"initial state norm {norm!r} is not 1")
        self.initial_state = psi / norm


@dataclass
class TrajectoryRecord:
    """Observables and diagnostics sampled every ``output_stride`` steps.

    The ensemble diagnostics (``n_eff``, ``p_drop_step``, ``p_drop_max``,
    ``min_n_eff``, ``max_p_drop``) are present for Monte Carlo runs and None
    for density-matrix runs.  ``alphas`` has one column per measurement
    channel; row 0 (time 0) is zero since no step has produced a record yet.
    ``min_n_eff`` and ``max_p_drop`` cover every step, not just recorded ones.
    """

    times: np.ndarray
    observables: dict[str, np.ndarray]
    alphas: np.ndarray  # (n_records, n_measurement_channels)
    mode: str
    seed: int
    config_hash: str = ""
    n_eff: np.ndarray | None = None
    p_drop_step: np.ndarray | None = None
    p_drop_max: np.ndarray | None = None
    min_n_eff: float | None = None
    max_p_drop: float | None = None

    @property
    def n_records(self) -> int:
        return len(self.times)


@dataclass
class StepInfo:
    """Per-step byproducts: measurement records and the regeneration report."""

    alphas: list[float]
    regen: RegenReport | None = None


@dataclass
class CompareReport:
    """Shared-noise Monte Carlo vs direct integration, optionally refined."""

    mc: TrajectoryRecord
    sme: TrajectoryRecord
    divergence: dict[str, float]
    refined_mc: TrajectoryRecord | None = None
    refined_sme: TrajectoryRecord | None = None
    refined_divergence: dict[str, float] | None = None


@dataclass
class ErrorReport:
    """Replicate runs sharing measurement noise, with fresh member noise.

    ``spread`` holds, per observable, the largest over time of the range
    (max minus min) across replicates; it estimates the sampling error of
    the ensemble representation.
    """

    records: list[TrajectoryRecord]
    spread: dict[str, float]


class _BlockRunner:
    """Fixed-block member map.  Workers only change scheduling, never the
    block decomposition, so outputs are bit-identical for any worker count."""

    def __init__(self, n_members: int, workers: int = 1, block: int = MEMBER_BLOCK):
        self._spans = [(lo, min(lo + block, n_members)) for lo in range(0, n_members, block)]
        self._executor = (
            ThreadPoolExecutor(max_workers=workers) if workers > 1 and len(self._spans) > 1 else None
        )

    def apply(self, fn, states: np.ndarray, per_member: np.ndarray | None = None) -> np.ndarray:
        """New state array with ``fn`` applied blockwise."""
        out = np.empty_like(states)

        def task(span):
            lo, hi = span
            try:
                out[lo:hi] = fn(states[lo:hi]) if per_member is None else fn(states[lo:hi], per_member[lo:hi])
            except AnnihilationError as exc:
                raise AnnihilationError(member=lo + max(exc.member, 0)) from None

        self._run(task)
        return out

    def apply_collect_norms(self, fn, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply ``fn`` blockwise, renormalize, and return the pre-normalization
        squared norms alongside the normalized states."""
        out = np.empty_like(states)
        sq = np.empty(states.shape[0], dtype=float)

        def task(span):
            lo, hi = span
            try:
                normed, block_sq = normalize_state(fn(states[lo:hi]))
            except AnnihilationError as exc:
                raise AnnihilationError(member=lo + max(exc.member, 0)) from None
            out[lo:hi] = normed
            sq[lo:hi] = block_sq

        self._run(task)
        return out, sq

    def _run(self, task) -> None:
        if self._executor is None:
            for span in self._spans:
                task(span)
        else:
            # consume the iterator so worker exceptions propagate
            list(self._executor.map(task, self._spans))

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None


def step_mc(
    ens: WeightedEnsemble,
    model: ModelSpec,
    noise: NoiseStreams,
    step: int,
    dt: float,
    p_thresh: float | None = None,
    regen_interval: int | None = None,
    pool: _BlockRunner | None = None,
) -> tuple[WeightedEnsemble, StepInfo]:
    """Advance the weighted ensemble by one time step.

    Order within the step: every decoherence channel (each member driven by
    its own increment), every white-noise Hamiltonian channel (likewise),
    the first-order deterministic Hamiltonian update, then every measurement
    channel in ascending index order.  Each measurement channel computes the
    shared ensemble expectation on the pre-update states, applies the update
    operator to every member with the one shared increment, multiplies the
    weights by the squared norms and renormalizes both.  Channels with zero
    rate are skipped, leaving states and weights untouched bit for bit.

    When ``p_thresh`` and ``regen_interval`` are given and
    ``step % regen_interval == 0``, the ensemble is regenerated at the end of
    the step.
    """
    if pool is None:
        pool = _BlockRunner(ens.size, workers=1)
    states = ens.states
    weights = ens.weights

    member_channel = 0
    for ch in model.decoherence:
        if ch.rate != 0.0:
            dv = noise.member_increments(member_channel, step, dt)
            states = pool.apply(lambda blk, dv_blk, c=ch: decoherence_step(blk, c, dv_blk, dt), states, dv)
        member_channel += 1
    for ch in model.ham_noise:
        if ch.strength != 0.0:
            dv = noise.member_increments(member_channel, step, dt)
            states = pool.apply(lambda blk, dv_blk, c=ch: hamiltonian_noise_step(blk, c, dv_blk, dt), states, dv)
        member_channel += 1
    if model.has_hamiltonian:
        states = pool.apply(lambda blk: hamiltonian_drift_step(blk, model.hamiltonian, dt), states)

    alphas: list[float] = []
    for j, ch in enumerate(model.measurements):
        if ch.strength == 0.0:
            alphas.append(0.0)
            continue
        shared_exp = ensemble_expectation(WeightedEnsemble(states, weights), ch.op)
        dw = float(noise.shared_increments(j, step, 1, dt)[0])
        alphas.append(measurement_record(ch, shared_exp, dw, dt))
        states, sq_norms = pool.apply_collect_norms(
            lambda blk, c=ch, e=shared_exp, w=dw: measurement_step_state(blk, c, e, w, dt), states
        )
        weights = update_weights(WeightedEnsemble(states, weights), sq_norms).weights

    out = WeightedEnsemble(states, weights)
    regen_report = None
    if p_thresh is not None and regen_interval is not None and step % regen_interval == 0:
        out, regen_report = regenerate(out, p_thresh)
    return out, StepInfo(alphas=alphas, regen=regen_report)


def run(config: SimulationConfig, workers: int = 1) -> TrajectoryRecord:
    """Execute a full run in the config's mode (mc, sme or me).

    The comparison and error-estimation protocols produce composite reports;
    use :func:`compare_shared_noise` and :func:`estimate_error` for those.
    """
    if config.mode == "mc":
        return _run_mc(config, workers)
    if config.mode == "sme":
        return _run_sme(config)
    if config.mode == "me":
        return _run_me(config)
    raise ValueError(
        f"mode '{config.mode}' is a composite protocol; call compare_shared_noise() or estimate_error()"
    )


def compare_shared_noise(config: SimulationConfig, workers: int = 1) -> CompareReport:
    """Monte Carlo vs direct integration on identical measurement noise.

    Both runs consume the same counter-based shared increments; the member
    increments are used only by the Monte Carlo side.  The divergence per
    observable is the largest absolute difference over the recorded times.
    With ``config.refine`` the comparison is repeated at half the time step
    on the same noise path (requires ``finest_dt <= dt / 2``).
    """
    if config.mode != "compare":
        raise ValueError(f"compare_shared_noise needs mode 'compare', got '{config.mode}'")
    if config.refine and config.dt == config.finest_dt:
        raise ValueError("refinement needs finest_dt <= dt / 2 so the half step can reuse the noise path")

    rec_mc = _run_mc(replace(config, mode="mc"), workers)
    rec_sme = _run_sme(replace(config, mode="sme"))
    divergence = _divergence(rec_mc, rec_sme)

    refined_mc = refined_sme = refined_divergence = None
    if config.refine:
        half = replace(
            config,
            mode="mc",
            dt=config.dt / 2.0,
            n_steps=config.n_steps * 2,
            output_stride=config.output_stride * 2,
        )
        refined_mc = _run_mc(half, workers)
        refined_sme = _run_sme(replace(half, mode="sme"))
        refined_divergence = _divergence(refined_mc, refined_sme)

    return CompareReport(
        mc=rec_mc,
        sme=rec_sme,
        divergence=divergence,
        refined_mc=refined_mc,
        refined_sme=refined_sme,
        refined_divergence=refined_divergence,
    )


def estimate_error(config: SimulationConfig, replicates: int | None = None, workers: int = 1) -> ErrorReport:
    """Replicate the Monte Carlo run with shared measurement noise and
    independent member noise; the spread between replicates estimates the
    ensemble sampling error."""
    if config.mode != "error-estimate":
        raise ValueError(f"estimate_error needs mode 'error-estimate', got '{config.mode}'")
    n_rep = config.replicates if replicates is None else int(replicates)
    if n_rep < 2:
        raise ValueError(f"replicates must be >= 2, got {n_rep}")

    mc_config = replace(config, mode="mc")
    base = _noise_for(mc_config)
    records = [_run_mc(mc_config, workers, streams=base)]
    for r in range(n_rep - 1):
        records.append(_run_mc(mc_config, workers, streams=base.fork_dv(r)))

    spread: dict[str, float] = {}
    for name in records[0].observables:
        stack = np.vstack([rec.observables[name] for rec in records])
        spread[name] = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
    return ErrorReport(records=records, spread=spread)


# -- mode implementations ------------------------------------------------------


def _run_mc(config: SimulationConfig, workers: int = 1, streams: NoiseStreams | None = None) -> TrajectoryRecord:
    model = config.model
    ens = init_uniform(np.tile(config.initial_state, (config.n_ens, 1)))
    if streams is None:
        streams = _noise_for(config)
    pool = _BlockRunner(config.n_ens, workers)
    rec = _Recorder(model, len(model.measurements))

    try:
        n_eff = effective_size(ens.weights)
        min_n_eff = n_eff
        max_p_drop = 0.0
        rec.add_mc(0.0, ens, n_eff, [0.0] * len(model.measurements), 0.0, 0.0)
        for s in range(config.n_steps):
            try:
                ens, info = step_mc(
                    ens,
                    model,
                    streams,
                    s,
                    config.dt,
                    p_thresh=config.p_thresh,
                    regen_interval=config.regen_interval,
                    pool=pool,
                )
            except AnnihilationError as exc:
                raise AnnihilationError(member=exc.member, step=s) from None
            n_eff = effective_size(ens.weights)
            min_n_eff = min(min_n_eff, n_eff)
            p_drop = info.regen.p_drop if info.regen is not None else 0.0
            max_p_drop = max(max_p_drop, p_drop)
            if (s + 1) % config.output_stride == 0:
                rec.add_mc((s + 1) * config.dt, ens, n_eff, info.alphas, p_drop, max_p_drop)
    finally:
        pool.close()
    return rec.finish_mc(config, min_n_eff, max_p_drop)


def _run_sme(config: SimulationConfig) -> TrajectoryRecord:
    model = config.model
    rho = np.outer(config.initial_state, config.initial_state.conj())
    streams = _noise_for(config)
    n_meas = len(model.measurements)
    # shared increments for the whole run, one row per channel
    dws = (
        np.vstack([streams.shared_increments(j, 0, config.n_steps, config.dt) for j in range(n_meas)])
        if n_meas
        else np.zeros((0, config.n_steps))
    )
    rec = _Recorder(model, n_meas)
    rec.add_density(0.0, rho, [0.0] * n_meas)
    for s in range(config.n_steps):
        alphas = [
            measurement_record(ch, float(np.real(np.trace(ch.op @ rho + rho @ ch.op.conj().T))), dws[j, s], config.dt)
            for j, ch in enumerate(model.measurements)
        ]
        rho = sme_step_direct(rho, model, dws[:, s], config.dt)
        if (s + 1) % config.output_stride == 0:
            rec.add_density((s + 1) * config.dt, rho, alphas)
    return rec.finish_density(config)


def _run_me(config: SimulationConfig) -> TrajectoryRecord:
    model = config.model
    rho = np.outer(config.initial_state, config.initial_state.conj())
    n_meas = len(model.measurements)
    rec = _Recorder(model, n_meas)
    rec.add_density(0.0, rho, [0.0] * n_meas)
    for s in range(config.n_steps):
        rho = me_step(rho, model, config.dt)
        if (s + 1) % config.output_stride == 0:
            rec.add_density((s + 1) * config.dt, rho, [0.0] * n_meas)
    return rec.finish_density(config)


class _Recorder:
    def __init__(self, model: ModelSpec, n_meas: int):
        self._model = model
        self._n_meas = n_meas
        self.times: list[float] = []
        self.obs: dict[str, list[float]] = {name: [] for name in model.observables}
        self.alphas: list[list[float]] = []
        self.n_eff: list[float] = []
        self.p_drop_step: list[float] = []
        self.p_drop_max: list[float] = []

    def add_mc(self, t, ens, n_eff, alphas, p_drop, p_drop_max):
        self.times.append(float(t))
        for name, op in self._model.observables.items():
            self.obs[name].append(observable_average(ens, op))
        self.alphas.append([float(a) for a in alphas])
        self.n_eff.append(float(n_eff))
        self.p_drop_step.append(float(p_drop))
        self.p_drop_max.append(float(p_drop_max))

    def add_density(self, t, rho, alphas):
        self.times.append(float(t))
        for name, op in self._model.observables.items():
            self.obs[name].append(float(np.real(np.trace(op @ rho))))
        self.alphas.append([float(a) for a in alphas])

    def _common(self, config: SimulationConfig) -> dict:
        return {
            "times": np.asarray(self.times),
            "observables": {name: np.asarray(vals) for name, vals in self.obs.items()},
            "alphas": np.asarray(self.alphas, dtype=float).reshape(len(self.times), self._n_meas),
            "mode": config.mode,
            "seed": config.seed,
            "config_hash": config.config_hash,
        }

    def finish_mc(self, config, min_n_eff, max_p_drop) -> TrajectoryRecord:
        return TrajectoryRecord(
            **self._common(config),
            n_eff=np.asarray(self.n_eff),
            p_drop_step=np.asarray(self.p_drop_step),
            p_drop_max=np.asarray(self.p_drop_max),
            min_n_eff=float(min_n_eff),
            max_p_drop=float(max_p_drop),
        )

    def finish_density(self, config) -> TrajectoryRecord:
        return TrajectoryRecord(**self._common(config))


def _noise_for(config: SimulationConfig) -> NoiseStreams:
    return NoiseStreams(
        config.seed,
        config.finest_dt,
        config.n_ens,
        len(config.model.decoherence) + len(config.model.ham_noise),
        len(config.model.measurements),
        dv_replicate=config.dv_replicate,
    )


def _divergence(a: TrajectoryRecord, b: TrajectoryRecord) -> dict[str, float]:
    return {
        name: float(np.max(np.abs(a.observables[name] - b.observables[name]))) for name in a.observables
    }
