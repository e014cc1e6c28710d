"""The collaborative execution model: agents, rounds, budgets and RNG streams.

A :class:`Collab` session owns a :class:`PullLedger` and the random streams of
its agents.  Agents pull arms during a round; at :meth:`Collab.end_round` their
counts and reward sums are merged and every agent sees the same statistics.
Time is charged per round as the largest per-agent pull count in that round.

Sub-routines run in forked sessions with their own budget.  Joining forks
aligns their rounds by index and sums per-agent loads, which is how logically
parallel copies sharing the same agents are charged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .constants import DEFAULT, Constants
from .core import Instance
from .errors import BudgetExceeded, InvalidParams, RoundCapExceeded

_AGENT, _COORDINATOR, _BATCH = 0, 1, 2


class Streams:
    """Counter-based random streams keyed by (seed, trial, path, role, agent).

    Every fork extends the path, so streams of sibling sub-routines never
    overlap and do not depend on how much randomness a sibling consumed.
    """

    def __init__(self, seed: int, trial: int = 0, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.trial = int(trial)
        self.path = tuple(int(p) for p in path)
        self._agents: dict[int, np.random.Generator] = {}
        self._coordinator: np.random.Generator | None = None
        self._batches = 0

    def _make(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.trial, *self.path, *key))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *tag: int) -> "Streams":
        return Streams(self.seed, self.trial, self.path + tuple(tag))

    def agent(self, a: int) -> np.random.Generator:
        if a not in self._agents:
            self._agents[a] = self._make(_AGENT, a)
        return self._agents[a]

    def coordinator(self) -> np.random.Generator:
        """Stream for algorithm-level randomness (partitions, subsamples)."""
        if self._coordinator is None:
            self._coordinator = self._make(_COORDINATOR)
        return self._coordinator

    def batch(self) -> np.random.Generator:
        """A fresh stream for a batched kernel call; successive calls differ."""
        self._batches += 1
        return self._make(_BATCH, self._batches - 1)


@dataclass(frozen=True)
class ArmStat:
    arm: int
    x: int
    theta_tilde: float


@dataclass
class RoundRecord:
    """One closed round: per-agent pull counts and merged per-arm reward sums.

    Reward sums are kept per arm only, since agents broadcast them at the end
    of the round and nothing downstream needs the per-agent split.
    """

    counts: np.ndarray
    rewards: np.ndarray

    @property
    def agent_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def duration(self) -> int:
        return int(self.agent_totals.max()) if self.counts.size else 0

    @property
    def message_size(self) -> int:
        return int(np.count_nonzero(self.counts.sum(axis=0)))


class PullLedger:
    """Accounting of pulls per (round, agent, arm) with budget and round caps."""

    def __init__(self, n: int, K: int, horizon: int | None = None, round_cap: int | None = None):
        if n < 1 or K < 1:
            raise InvalidParams("need n >= 1 arms and K >= 1 agents")
        if horizon is not None and horizon < 0:
            raise InvalidParams("horizon must be nonnegative")
        if round_cap is not None and round_cap < 1:
            raise InvalidParams("round cap must be at least 1")
        self.n, self.K = n, K
        self.horizon = None if horizon is None else int(horizon)
        self.round_cap = round_cap
        self.rounds: list[RoundRecord] = []
        self.time_closed = 0
        self.total_counts = np.zeros(n, dtype=np.int64)
        self.total_rewards = np.zeros(n, dtype=np.int64)
        self.agent_pulls = np.zeros(K, dtype=np.int64)
        self._reset_open()

    def _reset_open(self) -> None:
        self.open_counts = np.zeros((self.K, self.n), dtype=np.int64)
        self.open_rewards = np.zeros(self.n, dtype=np.int64)
        self.open_loads = np.zeros(self.K, dtype=np.int64)

    @property
    def time_used(self) -> int:
        return self.time_closed

    @property
    def rounds_used(self) -> int:
        return len(self.rounds)

    def headroom(self, agent: int | None = None) -> int | None:
        """Pulls an agent may still add in the open round (None means unlimited)."""
        if self.horizon is None:
            return None
        load = self.open_loads.max() if agent is None else self.open_loads[agent]
        return int(self.horizon - self.time_closed - load)

    def add(self, agent: int, arms, counts, rewards) -> None:
        if not 0 <= agent < self.K:
            raise InvalidParams(f"agent {agent} outside 0..{self.K - 1}")
        arms = np.asarray(arms, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        total = int(counts.sum())
        if total == 0:
            return
        if self.horizon is not None and self.time_closed + self.open_loads[agent] + total > self.horizon:
            raise BudgetExceeded(
                f"agent {agent} would use {self.time_closed + self.open_loads[agent] + total} > {self.horizon}"
            )
        np.add.at(self.open_counts[agent], arms, counts)
        np.add.at(self.open_rewards, arms, np.asarray(rewards, dtype=np.int64))
        self.open_loads[agent] += total

    def close_round(self) -> RoundRecord:
        if self.round_cap is not None and len(self.rounds) + 1 > self.round_cap:
            raise RoundCapExceeded(f"round cap {self.round_cap} reached")
        rec = RoundRecord(self.open_counts, self.open_rewards)
        self._commit(rec)
        self._reset_open()
        return rec

    def _commit(self, rec: RoundRecord) -> None:
        self.rounds.append(rec)
        self.time_closed += rec.duration
        self.total_counts += rec.counts.sum(axis=0)
        self.total_rewards += rec.rewards
        self.agent_pulls += rec.agent_totals

    def append_rounds(self, records: Sequence[RoundRecord]) -> None:
        """Append already-closed rounds (used when joining sub-routines)."""
        if self.open_loads.any():
            raise InvalidParams("cannot append rounds while a round is open")
        if self.round_cap is not None and len(self.rounds) + len(records) > self.round_cap:
            raise RoundCapExceeded(f"round cap {self.round_cap} reached")
        extra = sum(r.duration for r in records)
        if self.horizon is not None and self.time_closed + extra > self.horizon:
            raise BudgetExceeded(f"joined rounds use {self.time_closed + extra} > {self.horizon}")
        for rec in records:
            self._commit(rec)


def merge_parallel(ledgers: Iterable[PullLedger], n: int, K: int) -> list[RoundRecord]:
    """Round-aligned sum of several ledgers sharing the same agents."""
    ledgers = list(ledgers)
    depth = max((lg.rounds_used for lg in ledgers), default=0)
    merged = []
    for j in range(depth):
        counts = np.zeros((K, n), dtype=np.int64)
        rewards = np.zeros(n, dtype=np.int64)
        for lg in ledgers:
            if j < lg.rounds_used:
                counts += lg.rounds[j].counts
                rewards += lg.rounds[j].rewards
        merged.append(RoundRecord(counts, rewards))
    return merged


@dataclass
class Collab:
    """One session of the collaborative model over an instance."""

    instance: Instance
    K: int
    horizon: int | None = None
    round_cap: int | None = None
    streams: Streams = field(default_factory=lambda: Streams(0))
    constants: Constants = DEFAULT
    ledger: PullLedger = field(init=False)

    def __post_init__(self) -> None:
        if self.K < 1:
            raise InvalidParams("K must be at least 1")
        self.ledger = PullLedger(self.instance.n, self.K, self.horizon, self.round_cap)

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def time_used(self) -> int:
        return self.ledger.time_used

    @property
    def rounds_used(self) -> int:
        return self.ledger.rounds_used

    def pull(self, agent: int, arm: int, count: int) -> int:
        return int(self.pull_many(agent, [arm], [count])[0])

    def pull_many(self, agent: int, arms, counts) -> np.ndarray:
        """Agent ``agent`` pulls ``counts[k]`` times arm ``arms[k]``; returns reward sums."""
        arms = np.asarray(arms, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if not 0 <= agent < self.K:
            raise InvalidParams(f"agent {agent} outside 0..{self.K - 1}")
        head = self.ledger.headroom(agent)
        if head is not None and counts.sum() > head:
            raise BudgetExceeded(f"agent {agent} has {head} pulls left, asked for {counts.sum()}")
        rewards = self.instance.sample_sums(self.streams.agent(agent), arms, counts)
        self.ledger.add(agent, arms, counts, rewards)
        return rewards

    def pull_all_agents(self, arms, per_agent: int) -> np.ndarray:
        """Every agent pulls each arm ``per_agent`` times; returns merged reward sums."""
        arms = np.asarray(arms, dtype=np.int64)
        counts = np.full(arms.size, per_agent, dtype=np.int64)
        total = np.zeros(arms.size, dtype=np.int64)
        for agent in range(self.K):
            total += self.pull_many(agent, arms, counts)
        return total

    def record(self, agent: int, arms, counts, rewards) -> None:
        """Log pulls an agent made locally (e.g. inside a compiled kernel)."""
        self.ledger.add(agent, arms, counts, rewards)

    def end_round(self) -> dict[int, ArmStat]:
        touched = np.flatnonzero(self.ledger.open_counts.sum(axis=0))
        self.ledger.close_round()
        return self.merged_stats(touched)

    def flush(self) -> None:
        """Close the open round if it holds pulls (after an aborted sub-routine)."""
        if self.ledger.open_loads.any():
            self.ledger.close_round()

    def merged_stats(self, arms: Iterable[int] | None = None) -> dict[int, ArmStat]:
        lg = self.ledger
        if arms is None:
            arms = np.flatnonzero(lg.total_counts)
        out = {}
        for a in arms:
            x = int(lg.total_counts[a])
            out[int(a)] = ArmStat(int(a), x, float(lg.total_rewards[a]) / x if x else 0.0)
        return out

    def means(self, arms) -> np.ndarray:
        """Cumulative merged empirical means of ``arms`` in this session."""
        arms = np.asarray(arms, dtype=np.int64)
        return self.ledger.total_rewards[arms] / self.ledger.total_counts[arms]

    def fork(self, horizon: int | None, *tag: int, instance: Instance | None = None) -> "Collab":
        """A child session on the same agents with its own budget and streams."""
        return Collab(
            instance if instance is not None else self.instance,
            self.K,
            horizon=horizon,
            streams=self.streams.child(*tag),
            constants=self.constants,
        )

    def join(self, children: Sequence["Collab"]) -> None:
        """Charge co-scheduled children: rounds aligned by index, loads summed."""
        for ch in children:
            if ch.ledger.open_loads.any():
                raise InvalidParams("child session has an open round")
        self.ledger.append_rounds(merge_parallel([c.ledger for c in children], self.n, self.K))

    def absorb(self, records: Sequence[RoundRecord]) -> None:
        """Charge rounds produced outside a session (batched kernels)."""
        self.ledger.append_rounds(records)

    def transcript(self) -> list[dict]:
        recs = []
        for r, rec in enumerate(self.ledger.rounds):
            for a in range(self.K):
                recs.append({"round": r, "agent": a, "pulls": rec.counts[a].tolist()})
        return recs


@dataclass
class ExperimentReport:
    """Outcome of one trial."""

    trial: int
    algo: str
    returned: frozenset[int] | None
    rounds_used: int
    time_used: int
    agent_pulls: tuple[int, ...]
    correct: bool
    seed: int
    horizon: int | None = None
    round_cap: int | None = None
    flags: tuple[str, ...] = ()
    error: str | None = None
