"""Reproducible counter-based Wiener-increment streams.

Every increment is a pure function of (master seed, stream identity, fine
step index).  No generator state is carried between queries, so any worker
may ask for any position in any order and a re-run of the same configuration
reproduces the noise bit for bit, regardless of scheduling.

Two families of streams exist:

* shared streams, one per measurement channel, queried identically by every
  ensemble member and by the density-matrix reference integrator;
* member streams, one per (ensemble member, decoherence-type channel) pair,
  reseedable as a group so that a run can be replicated with the same shared
  noise but fresh member noise.

All increments are generated at the finest declared resolution ``finest_dt``.
A run stepping at ``dt = finest_dt * 2**m`` receives the sum of ``2**m``
consecutive fine increments, which is a valid increment of the same Brownian
path at the coarser step.  Halving the time step therefore refines the path
instead of drawing a new one, which is what trajectory-level convergence
comparisons require.

The fixed mapping, documented for bit-reproducibility: each fine increment
consumes one 64-bit word of a Philox4x64 counter stream keyed through
``numpy.random.SeedSequence(seed, spawn_key=...)``; the top 53 bits are
mapped to the open unit interval via ``(w >> 11) * 2**-53 + 2**-54`` and
pushed through the inverse normal CDF, then scaled by ``sqrt(finest_dt)``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.random import Philox, SeedSequence
from scipy.special import ndtri

# spawn-key tags separating the stream families
_TAG_SHARED = 0
_TAG_MEMBER = 1


def coarse_from_fine(fine) -> np.ndarray:
    """Pair-sum an increment sequence at step dt/2 into one at step dt.

    Element ``k`` of the result is ``fine[2k] + fine[2k+1]``; the output is a
    valid increment sequence of the same Brownian path at the doubled step.
    """
    fine = np.asarray(fine, dtype=float)
    if fine.ndim != 1 or fine.size % 2 != 0:
        raise ValueError(f"fine sequence must be 1-d with even length, got shape {fine.shape}")
    return fine[0::2] + fine[1::2]


class NoiseStreams:
    """Counter-based Gaussian increment source for one simulation run.

    Parameters
    ----------
    seed : int
        Master seed, 0 <= seed < 2**64.
    finest_dt : float
        Finest time resolution; every query's ``dt`` must equal
        ``finest_dt * 2**m`` for integer m >= 0.
    n_members : int
        Ensemble size (fixes the member-stream block layout).
    n_member_channels : int
        Number of per-member noise sources (decoherence plus
        Hamiltonian-noise channels).
    n_shared_channels : int
        Number of shared noise sources (measurement channels).
    dv_replicate : int
        Replicate tag mixed into the member-stream keys only.  Streams with
        different tags are statistically independent while the shared
        streams stay bit-identical; see :meth:`fork_dv`.
    """

    def __init__(
        self,
        seed: int,
        finest_dt: float,
        n_members: int,
        n_member_channels: int,
        n_shared_channels: int,
        dv_replicate: int = 0,
    ):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if finest_dt <= 0:
            raise ValueError(f"finest_dt must be positive, got {finest_dt}")
        if n_members < 1:
            raise ValueError("n_members must be >= 1")
        if dv_replicate < 0:
            raise ValueError("dv_replicate must be >= 0")
        self.seed = int(seed)
        self.finest_dt = float(finest_dt)
        self.n_members = int(n_members)
        self.n_member_channels = int(n_member_channels)
        self.n_shared_channels = int(n_shared_channels)
        self.dv_replicate = int(dv_replicate)
        # one member-step block spans the members padded to whole 4-word
        # Philox counter blocks, so each fine step starts block-aligned
        self._member_stride = 4 * ((self.n_members + 3) // 4)
        self._sqrt_finest = math.sqrt(self.finest_dt)
        self._shared_seqs = [self._shared_seq(j) for j in range(self.n_shared_channels)]
        self._member_seqs = [self._member_seq(i) for i in range(self.n_member_channels)]

    # -- spec-level stream API ------------------------------------------------

    def gaussian_increment(self, stream_id: tuple, step: int, dt: float) -> float:
        """One Wiener increment, Gaussian(0, dt), for a named stream.

        ``stream_id`` is ``("dW", channel)`` for a shared stream or
        ``("dV", member, channel)`` for a member stream.  The value is a pure
        function of (seed, stream identity, step) and agrees bit for bit with
        the block queries used by the engine.
        """
        if not isinstance(stream_id, tuple) or not stream_id:
            raise ValueError(f"unknown stream id {stream_id!r}")
        kind = stream_id[0]
        if kind == "dW" and len(stream_id) == 2:
            (channel,) = stream_id[1:]
            return float(self.shared_increments(channel, step, 1, dt)[0])
        if kind == "dV" and len(stream_id) == 3:
            member, channel = stream_id[1:]
            if not 0 <= member < self.n_members:
                raise ValueError(f"unknown stream id {stream_id!r}: member out of range")
            return float(self.member_increments(channel, step, dt)[member])
        raise ValueError(f"unknown stream id {stream_id!r}")

    def fork_dv(self, replicate: int) -> "NoiseStreams":
        """Streams sharing all shared (dW) sequences bit-exactly, with member
        (dV) sequences reseeded independently of this object's.

        Distinct ``replicate`` values give mutually independent member
        streams; ``replicate = 0`` already differs from the parent.
        """
        if replicate < 0:
            raise ValueError("replicate must be >= 0")
        return NoiseStreams(
            self.seed,
            self.finest_dt,
            self.n_members,
            self.n_member_channels,
            self.n_shared_channels,
            dv_replicate=self.dv_replicate + 1 + int(replicate),
        )

    # -- block queries used by the engine -------------------------------------

    def shared_increments(self, channel: int, step: int, count: int, dt: float) -> np.ndarray:
        """Increments of one shared stream for ``count`` consecutive steps of
        size ``dt``, as a float array of shape (count,)."""
        if not 0 <= channel < self.n_shared_channels:
            raise ValueError(f"unknown stream id ('dW', {channel})")
        m = self._log2_ratio(dt)
        fine = self._normals(self._shared_seqs[channel], (step << m), (count << m))
        fine *= self._sqrt_finest
        return fine.reshape(count, 1 << m).sum(axis=1)

    def member_increments(self, channel: int, step: int, dt: float) -> np.ndarray:
        """Increments of every member's stream for one step of size ``dt``,
        as a float array of shape (n_members,)."""
        if not 0 <= channel < self.n_member_channels:
            raise ValueError(f"unknown stream id ('dV', *, {channel})")
        m = self._log2_ratio(dt)
        stride = self._member_stride
        fine = self._normals(self._member_seqs[channel], (step << m) * stride, (stride << m))
        fine *= self._sqrt_finest
        return fine.reshape(1 << m, stride)[:, : self.n_members].sum(axis=0)

    # -- internals -------------------------------------------------------------

    def _log2_ratio(self, dt: float) -> int:
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        m = round(math.log2(dt / self.finest_dt))
        if m < 0 or self.finest_dt * (2.0**m) != dt:
            raise ValueError(
                f"dt = {dt!r} is not finest_dt * 2**m for integer m >= 0 (finest_dt = {self.finest_dt!r})"
            )
        return m

    def _shared_seq(self, channel: int) -> SeedSequence:
        return SeedSequence(entropy=self.seed, spawn_key=(_TAG_SHARED, int(channel)))

    def _member_seq(self, channel: int) -> SeedSequence:
        return SeedSequence(entropy=self.seed, spawn_key=(_TAG_MEMBER, int(channel), self.dv_replicate))

    @staticmethod
    def _normals(seq: SeedSequence, start: int, count: int) -> np.ndarray:
        """Standard normals at absolute word positions [start, start + count)."""
        offset = start % 4
        bg = Philox(seed=seq, counter=[start // 4, 0, 0, 0])
        raw = bg.random_raw(offset + count)[offset:]
        u = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54
        return ndtri(u)
