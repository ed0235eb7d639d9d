"""Discrete-event simulation of the polling system at a given scale.

The simulator advances the server stage by stage.  Within a stage it first
draws the binomially thinned number of jobs to clear, serves that many busy
periods of the attended queue in one vectorised first-passage computation,
then samples the switchover.  Queue paths are reconstructed per window from
the arrival and completion epochs, which keeps per-event Python overhead out
of the hot loop.

Event-order convention at coincident epochs: service completions precede
arrivals, which precede switchover ends.  All sampled epochs are continuous,
so ties have probability zero; the convention only pins down the semantics
of window boundaries (an arrival exactly at a boundary belongs to the next
window).

Randomness is split into named substreams per source (queue arrivals, queue
services, per-stage switchovers and binomial thinnings), so runs are
reproducible and individual sources can be varied without disturbing the
rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import rng
from .cost import CostFunction
from .distributions import Distribution, ScaledSystem
from .fluid import PECandidate
from .model import ControlParams, validate
from .stats import batch_means, geweke_z, ratio_ci


class _SampleBuffer:
    """Sequential i.i.d. draws with rollback of unused values.

    ``take`` may over-draw; ``rollback`` returns the tail to the stream so the
    next ``take`` sees exactly the same values.  Consumption therefore depends
    only on how many draws were actually used.
    """

    def __init__(self, dist: Distribution, gen: np.random.Generator, chunk: int = 1024):
        self._dist = dist
        self._gen = gen
        self._chunk = chunk
        self._values = np.empty(0)
        self._ptr = 0

    def take(self, count: int) -> np.ndarray:
        short = self._ptr + count - self._values.size
        if short > 0:
            block = np.asarray(
                self._dist.sample(self._gen, max(short, self._chunk)), dtype=float
            )
            self._values = np.concatenate([self._values[self._ptr :], block])
            self._ptr = 0
        view = self._values[self._ptr : self._ptr + count]
        self._ptr += count
        return view

    def rollback(self, count: int) -> None:
        assert 0 <= count <= self._ptr
        self._ptr -= count


class _ArrivalClock:
    """Poisson arrival epochs for one queue, consumed in time order.

    ``peek_until``/``consume_until(t)`` return the pending epochs strictly
    before ``t``; peeking never advances the stream.
    """

    def __init__(self, rate: float, gen: np.random.Generator, chunk: int = 4096):
        self._scale = 1.0 / float(rate)
        self._gen = gen
        self._chunk = chunk
        self._times = np.empty(0)
        self._ptr = 0
        self._horizon = 0.0

    def _ensure(self, t: float) -> None:
        block_size = self._chunk
        while self._horizon <= t:
            gaps = self._gen.exponential(self._scale, block_size)
            block = self._horizon + np.cumsum(gaps)
            self._horizon = float(block[-1])
            self._times = np.concatenate([self._times[self._ptr :], block])
            self._ptr = 0
            block_size = min(block_size * 2, 1 << 20)

    def peek_until(self, t: float) -> np.ndarray:
        self._ensure(t)
        idx = int(np.searchsorted(self._times, t, side="left"))
        return self._times[self._ptr : idx]

    def consume_until(self, t: float) -> np.ndarray:
        self._ensure(t)
        idx = int(np.searchsorted(self._times, t, side="left"))
        view = self._times[self._ptr : idx]
        self._ptr = idx
        if self._ptr > 65536:
            self._times = self._times[self._ptr :].copy()
            self._ptr = 0
        return view


@dataclass(frozen=True)
class CycleRecord:
    """Observables of one server tour.

    Queue counts are raw job numbers; times and the cost integral are divided
    by the scale, so ``cost / duration`` estimates the long-run cost rate of
    the scaled process directly.
    """

    index: int
    start_time: float
    duration: float
    cost: float
    start_levels: tuple[int, ...]
    polling_levels: np.ndarray
    busy_times: np.ndarray
    switchover_times: np.ndarray
    arrivals: np.ndarray
    services: np.ndarray


@dataclass(frozen=True)
class ScaledPath:
    """Piecewise-constant scaled queue path over the recorded span.

    Times are measured from the start of recording and divided by the scale;
    levels are job counts divided by the scale.
    """

    end_time: float
    start_levels: np.ndarray
    times: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]

    def sample(self, at: np.ndarray) -> np.ndarray:
        """Right-continuous levels at the given scaled times, (len, K)."""
        at = np.asarray(at, dtype=float)
        out = np.empty((at.size, self.start_levels.size))
        for k in range(self.start_levels.size):
            seq = np.concatenate([[self.start_levels[k]], self.values[k]])
            out[:, k] = seq[np.searchsorted(self.times[k], at, side="right")]
        return out


class _PathRecorder:
    def __init__(self, num_queues: int):
        self.origin: float | None = None
        self.start: np.ndarray | None = None
        self._times: list[list[np.ndarray]] = [[] for _ in range(num_queues)]
        self._values: list[list[np.ndarray]] = [[] for _ in range(num_queues)]

    def begin(self, t: float, levels: np.ndarray) -> None:
        if self.origin is None:
            self.origin = t
            self.start = levels.copy()

    def add(self, queue: int, times: np.ndarray, levels: np.ndarray) -> None:
        if times.size:
            self._times[queue].append(times)
            self._values[queue].append(levels)

    def finalize(self, scale: int, end: float) -> ScaledPath:
        assert self.origin is not None and self.start is not None
        times = tuple(
            (np.concatenate(chunks) - self.origin) / scale if chunks else np.empty(0)
            for chunks in self._times
        )
        values = tuple(
            np.concatenate(chunks) / scale if chunks else np.empty(0)
            for chunks in self._values
        )
        return ScaledPath(
            end_time=(end - self.origin) / scale,
            start_levels=self.start / scale,
            times=times,
            values=values,
        )


class _Engine:
    def __init__(
        self,
        scaled: ScaledSystem,
        control: ControlParams,
        psi: CostFunction | None,
        seed: int,
    ):
        params = scaled.params
        table = control.augmented_table(params)
        self._params = params
        self._scaled = scaled
        self._table = table
        self._ratios = control.ratio_array
        self._psi = psi
        self._separable = psi is not None and psi.separable
        self._components = getattr(psi, "components", None) if psi else None

        k_range = range(params.num_queues)
        self._clocks = [
            _ArrivalClock(params.arrival_rates[k], rng.substream(seed, rng.ARRIVALS, k))
            for k in k_range
        ]
        self._services = [
            _SampleBuffer(scaled.service[k], rng.substream(seed, rng.SERVICES, k))
            for k in k_range
        ]
        self._switch_gens = [
            rng.substream(seed, rng.SWITCHOVERS, i) for i in range(len(table))
        ]
        self._binomial_gens = [
            rng.substream(seed, rng.BINOMIALS, i) for i in range(len(table))
        ]

        self._t = 0.0
        self._levels = np.zeros(params.num_queues, dtype=np.int64)
        self.cycles_run = 0
        self.recorder: _PathRecorder | None = None
        self._recording = False
        self._cycle_cost: list[float] = []
        self._cycle_arrivals = np.zeros(params.num_queues, dtype=np.int64)

    # -- window machinery ---------------------------------------------------

    def _busy_period(self, queue: int, drop: int) -> tuple[float, int, np.ndarray]:
        """Serve ``queue`` until its count first falls by ``drop`` jobs.

        Returns (duration, services used, completion epochs relative to the
        window start).  Works chunk-wise: completions are laid out against
        the pending arrivals and the first passage of the net-drop walk is
        located by vector comparison; unused service draws are rolled back.
        """
        clock = self._clocks[queue]
        buffer = self._services[queue]
        t0 = self._t
        load = self._params.arrival_rates[queue] / self._params.service_rates[queue]
        expected = drop / (1.0 - load)
        chunk = max(32, int(1.25 * expected) + 8)
        base = 0
        tail = 0.0
        parts: list[np.ndarray] = []
        while True:
            draws = buffer.take(chunk)
            completions = tail + np.cumsum(draws)
            pending = clock.peek_until(t0 + completions[-1]) - t0
            arrived = np.searchsorted(pending, completions, side="left")
            walk = base + 1 + np.arange(draws.size) - arrived
            hits = np.nonzero(walk == drop)[0]
            if hits.size:
                used = int(hits[0]) + 1
                buffer.rollback(draws.size - used)
                parts.append(completions[:used])
                duration = float(completions[used - 1])
                all_completions = parts[0] if len(parts) == 1 else np.concatenate(parts)
                return duration, base + used, all_completions
            base += draws.size
            tail = float(completions[-1])
            parts.append(completions)
            if base > 100_000_000:
                raise RuntimeError("busy period failed to terminate")
            chunk = min(chunk * 2, 1 << 22)

    def _process_window(
        self,
        duration: float,
        attended: int | None = None,
        completions: np.ndarray | None = None,
    ) -> None:
        """Advance time by ``duration``, folding in arrivals on every queue
        and, for the attended queue, the supplied service completions."""
        t0 = self._t
        start = self._levels.copy()
        per_queue: list[tuple[np.ndarray, np.ndarray]] = []
        for k in range(start.size):
            arrivals = self._clocks[k].consume_until(t0 + duration) - t0
            if k == attended:
                times = np.concatenate([completions, arrivals])
                deltas = np.concatenate(
                    [
                        np.full(completions.size, -1, dtype=np.int64),
                        np.ones(arrivals.size, dtype=np.int64),
                    ]
                )
                order = np.argsort(times, kind="stable")
                times = times[order]
                deltas = deltas[order]
            else:
                times = arrivals
                deltas = np.ones(arrivals.size, dtype=np.int64)
            levels = start[k] + np.cumsum(deltas)
            per_queue.append((times, levels))
            self._cycle_arrivals[k] += arrivals.size
            if levels.size:
                self._levels[k] = levels[-1]

        if self._psi is not None:
            self._cycle_cost.append(self._window_cost(start, duration, per_queue))
        if self._recording and self.recorder is not None:
            for k, (times, levels) in enumerate(per_queue):
                self.recorder.add(k, t0 + times, levels)
        self._t = t0 + duration

    def _window_cost(
        self,
        start: np.ndarray,
        duration: float,
        per_queue: list[tuple[np.ndarray, np.ndarray]],
    ) -> float:
        scale = self._scaled.scale
        if self._separable and self._components is not None:
            total = 0.0
            for k, (times, levels) in enumerate(per_queue):
                seq = np.concatenate([[start[k]], levels]) / scale
                bounds = np.concatenate([[0.0], times, [duration]])
                total += float(np.dot(self._components[k].value(seq), np.diff(bounds)))
            return total
        # joint step path for non-separable costs
        all_times = np.concatenate([times for times, _ in per_queue])
        columns = np.concatenate(
            [np.full(times.size, k) for k, (times, _) in enumerate(per_queue)]
        )
        jumps = np.concatenate(
            [np.diff(levels, prepend=start[k]) for k, (_, levels) in enumerate(per_queue)]
        )
        order = np.argsort(all_times, kind="stable")
        steps = np.zeros((all_times.size + 1, start.size))
        steps[1:][np.arange(order.size), columns[order]] = jumps[order]
        path = start + np.cumsum(steps, axis=0)
        bounds = np.concatenate([[0.0], all_times[order], [duration]])
        assert self._psi is not None
        return float(np.dot(self._psi.value(path / scale), np.diff(bounds)))

    # -- cycle driver ---------------------------------------------------------

    def cycle(self, record_path: bool = False) -> CycleRecord:
        """Run one full server tour and return its observables."""
        self._recording = record_path
        if record_path:
            if self.recorder is None:
                self.recorder = _PathRecorder(self._levels.size)
            self.recorder.begin(self._t, self._levels)

        table = self._table
        scale = self._scaled.scale
        start_t = self._t
        start_levels = self._levels.copy()
        num_stages = len(table)
        polling = np.empty((num_stages, start_levels.size), dtype=np.int64)
        busy = np.empty(num_stages)
        switch = np.empty(num_stages)
        services = np.zeros(start_levels.size, dtype=np.int64)
        self._cycle_cost = []
        self._cycle_arrivals[:] = 0

        basic = len(table.basic)
        for i in range(num_stages):
            polling[i] = self._levels
            queue = table.polled_queue(i)
            cleared = int(
                self._binomial_gens[i].binomial(self._levels[queue], self._ratios[i])
            )
            if cleared > 0:
                duration, served, completions = self._busy_period(queue, cleared)
                before = self._levels[queue]
                self._process_window(duration, attended=queue, completions=completions)
                assert self._levels[queue] == before - cleared
                services[queue] += served
                busy[i] = duration
            else:
                busy[i] = 0.0
            pause = float(
                self._scaled.switchover[i % basic].sample(self._switch_gens[i])
            )
            if pause > 0.0:
                self._process_window(pause)
            switch[i] = pause

        self.cycles_run += 1
        return CycleRecord(
            index=self.cycles_run - 1,
            start_time=start_t / scale,
            duration=(self._t - start_t) / scale,
            cost=math.fsum(self._cycle_cost) / scale if self._psi else math.nan,
            start_levels=tuple(int(v) for v in start_levels),
            polling_levels=polling,
            busy_times=busy / scale,
            switchover_times=switch / scale,
            arrivals=self._cycle_arrivals.copy(),
            services=services,
        )


@dataclass
class SimulationResult:
    """Measured cycles of one run, plus the optional recorded path."""

    scaled: ScaledSystem
    control: ControlParams
    seed: int
    warmup_cycles: int
    records: list[CycleRecord] = field(repr=False)
    path: ScaledPath | None = None

    @cached_property
    def durations(self) -> np.ndarray:
        return np.array([r.duration for r in self.records])

    @cached_property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @cached_property
    def polling_array(self) -> np.ndarray:
        """(cycles, stages, queues) job counts at every polling epoch."""
        return np.stack([r.polling_levels for r in self.records])

    @cached_property
    def busy_array(self) -> np.ndarray:
        return np.stack([r.busy_times for r in self.records])

    @cached_property
    def switchover_array(self) -> np.ndarray:
        return np.stack([r.switchover_times for r in self.records])


def run(
    scaled: ScaledSystem,
    control: ControlParams,
    psi: CostFunction | None = None,
    *,
    warmup_cycles: int | None = None,
    measured_cycles: int = 1000,
    seed: int = 0,
    record_path_cycles: int = 0,
    warmup_limit: int = 2000,
) -> SimulationResult:
    """Simulate ``measured_cycles`` server tours after warmup.

    The system starts empty with the server about to poll stage 0.  With
    ``warmup_cycles=None`` at least 500 tours are discarded and warmup is
    extended in steps of 250 (up to ``warmup_limit``) until the Geweke score
    of the total queue length at tour starts drops below 3.
    """
    params = scaled.params
    validate(params)
    control.validate_for(params)
    if measured_cycles < 1:
        raise ValueError("measured_cycles must be positive")

    engine = _Engine(scaled, control, psi, seed)
    if warmup_cycles is None:
        totals: list[int] = []
        target = 500
        while True:
            while engine.cycles_run < target:
                record = engine.cycle()
                totals.append(sum(record.start_levels))
            if abs(geweke_z(np.array(totals, dtype=float))) < 3.0:
                break
            if target >= warmup_limit:
                break
            target = min(target + 250, warmup_limit)
    else:
        for _ in range(warmup_cycles):
            engine.cycle()
    warmup_used = engine.cycles_run

    records = []
    for m in range(measured_cycles):
        records.append(engine.cycle(record_path=m < record_path_cycles))
    path = None
    if record_path_cycles > 0 and engine.recorder is not None:
        end = engine.recorder.origin + sum(
            r.duration for r in records[:record_path_cycles]
        ) * scaled.scale
        path = engine.recorder.finalize(scaled.scale, end)
    return SimulationResult(
        scaled=scaled,
        control=control,
        seed=seed,
        warmup_cycles=warmup_used,
        records=records,
        path=path,
    )


def long_run_cost(
    result: SimulationResult, batches: int = 20, confidence: float = 0.95
) -> tuple[float, float]:
    """Long-run cost rate estimate with a t confidence half-width."""
    return ratio_ci(result.costs, result.durations, batches, confidence)


def polling_epoch_stats(
    result: SimulationResult, pe: PECandidate, batches: int = 20
) -> list[dict[str, float | int | str]]:
    """Compare per-stage simulated means with periodic-equilibrium values.

    For every stage the scaled queue levels at the polling epoch and the busy
    time are averaged with batch-means standard errors and standardised
    against the fluid prediction, which the stationary means match exactly at
    every scale.  The tour duration row checks the cycle mean the same way.
    """
    scale = result.scaled.scale
    rows: list[dict[str, float | int | str]] = []

    def _row(kind: str, stage: int, queue: int, samples: np.ndarray, fluid: float):
        means = batch_means(samples, batches)
        estimate = float(means.mean())
        error = float(means.std(ddof=1)) / math.sqrt(means.size)
        z = (estimate - fluid) / error if error > 0 else math.inf
        rows.append(
            {
                "kind": kind,
                "stage": stage,
                "queue": queue,
                "estimate": estimate,
                "std_error": error,
                "fluid": fluid,
                "z": float(z),
            }
        )

    fluid_polling = pe.polling_levels()
    stages, queues = fluid_polling.shape
    for i in range(stages):
        for k in range(queues):
            _row(
                "polling_level",
                i,
                k,
                result.polling_array[:, i, k] / scale,
                float(fluid_polling[i, k]),
            )
        _row("busy_time", i, -1, result.busy_array[:, i], float(pe.busy_times[i]))
    _row("duration", -1, -1, result.durations, float(pe.cycle_time))
    return rows
