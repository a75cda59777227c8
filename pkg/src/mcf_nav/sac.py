"""Soft actor-critic: squashed-Gaussian actor, twin critics, replay buffer and demonstrations."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from . import seeding
from .config import ApfConfig, SacConfig
from .errors import TrainingDivergenceError
from .gaussfuse import DiagGaussian2
from .neural import Adam, Mlp
from .prior_apf import apf_action
from .sim import OBS_DIM, NavigationEnv, WorldSpec

logger = logging.getLogger("mcf_nav.sac")

ACT_DIM = 2
Source = Literal["agent", "demo"]
_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2 = math.log(2.0)


@dataclass(frozen=True)
class LossReport:
    q1_loss: float
    q2_loss: float
    actor_loss: float
    entropy: float


@dataclass(frozen=True)
class Batch:
    obs: np.ndarray
    act: np.ndarray
    rew: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    source: np.ndarray


class _SlotIndex:
    """Set of buffer slots with O(1) insert, remove and uniform draw."""

    def __init__(self, capacity: int) -> None:
        self.slots = np.zeros(capacity, dtype=np.int64)
        self.where = np.full(capacity, -1, dtype=np.int64)
        self.count = 0

    def add(self, slot: int) -> None:
        self.slots[self.count] = slot
        self.where[slot] = self.count
        self.count += 1

    def remove(self, slot: int) -> None:
        pos = self.where[slot]
        last = self.slots[self.count - 1]
        self.slots[pos] = last
        self.where[last] = pos
        self.where[slot] = -1
        self.count -= 1

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        picked: np.ndarray = self.slots[rng.integers(0, self.count, size=n)]
        return picked


class ReplayBuffer:
    """FIFO ring of transitions, each tagged as agent experience or a demonstration."""

    SOURCES: tuple[Source, Source] = ("agent", "demo")

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM) -> None:
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.source = np.zeros(capacity, dtype=np.int8)
        self._index = {name: _SlotIndex(capacity) for name in self.SOURCES}
        self._ptr = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def count(self, source: Source) -> int:
        return self._index[source].count

    def add(
        self,
        obs: np.ndarray,
        action: tuple[float, float] | np.ndarray,
        reward: float,
        next_obs: np.ndarray,
        done: bool,
        source: Source = "agent",
    ) -> None:
        slot = self._ptr
        if self._size == self.capacity:
            self._index[self.SOURCES[self.source[slot]]].remove(slot)
        self.obs[slot] = obs
        self.act[slot] = action
        self.rew[slot] = reward
        self.next_obs[slot] = next_obs
        self.done[slot] = float(done)
        self.source[slot] = self.SOURCES.index(source)
        self._index[source].add(slot)
        self._ptr = (self._ptr + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _gather(self, idx: np.ndarray) -> Batch:
        return Batch(
            obs=self.obs[idx],
            act=self.act[idx],
            rew=self.rew[idx],
            next_obs=self.next_obs[idx],
            done=self.done[idx],
            source=self.source[idx],
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sample with replacement over every stored transition."""
        return self._gather(rng.integers(0, self._size, size=batch_size))

    def sample_stratified(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Half demonstrations, half agent experience while both pools are non-empty."""
        demo, agent = self._index["demo"], self._index["agent"]
        if demo.count == 0 or agent.count == 0:
            return self.sample(batch_size, rng)
        n_demo = batch_size // 2
        idx = np.concatenate([demo.draw(n_demo, rng), agent.draw(batch_size - n_demo, rng)])
        return self._gather(idx)


def _softplus(x: np.ndarray) -> np.ndarray:
    result: np.ndarray = np.logaddexp(0.0, x)
    return result


class SacAgent:
    """Actor, twin critics and their target copies, with fixed entropy weight."""

    def __init__(
        self,
        cfg: SacConfig,
        rng: np.random.Generator,
        obs_dim: int = OBS_DIM,
        act_dim: int = ACT_DIM,
    ) -> None:
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        hidden = list(cfg.hidden_sizes)
        self.actor = Mlp([obs_dim, *hidden, 2 * act_dim], head="gaussian", rng=rng)
        self.q1 = Mlp([obs_dim + act_dim, *hidden, 1], rng=rng)
        self.q2 = Mlp([obs_dim + act_dim, *hidden, 1], rng=rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.actor_opt = Adam(self.actor.params, learning_rate=cfg.lr)
        self.q1_opt = Adam(self.q1.params, learning_rate=cfg.lr)
        self.q2_opt = Adam(self.q2.params, learning_rate=cfg.lr)
        self.updates = 0

    @property
    def alpha_entropy(self) -> float:
        return self.cfg.alpha_entropy

    def policy_distribution(self, obs: np.ndarray) -> DiagGaussian2:
        """Action-space Gaussian: ``tanh`` of the mean head, ``exp(log_std)**2`` variance."""
        return policy_distribution(self.actor, obs)

    def deterministic_action(self, obs: np.ndarray) -> tuple[float, float]:
        dist = self.policy_distribution(obs)
        return dist.v.mean, dist.w.mean

    def _sample_actions(
        self, obs: np.ndarray, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Reparameterized tanh-Gaussian draws with their log-probabilities."""
        mu, log_std = self.actor.forward(obs)
        std = np.exp(log_std)
        eps = rng.standard_normal(mu.shape)
        u = mu + std * eps
        a = np.tanh(u)
        correction = 2.0 * (_LOG_2 - u - _softplus(-2.0 * u))
        logp = np.sum(-0.5 * eps**2 - log_std - 0.5 * _LOG_2PI - correction, axis=1)
        return a, logp, (std, eps, u)

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator, stratified: bool = False) -> LossReport:
        """One gradient step on both critics and the actor, then Polyak-average the targets."""
        cfg = self.cfg
        batch = (
            buffer.sample_stratified(cfg.batch_size, rng)
            if stratified
            else buffer.sample(cfg.batch_size, rng)
        )
        n = batch.obs.shape[0]

        a_next, logp_next, _ = self._sample_actions(batch.next_obs, rng)
        sa_next = np.concatenate([batch.next_obs, a_next], axis=1)
        q_next = np.minimum(
            self.q1_target.forward(sa_next)[:, 0], self.q2_target.forward(sa_next)[:, 0]
        )
        target = batch.rew + cfg.gamma * (1.0 - batch.done) * (q_next - cfg.alpha_entropy * logp_next)

        sa = np.concatenate([batch.obs, batch.act], axis=1)
        critic_losses = []
        for q, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            diff = q.forward(sa)[:, 0] - target
            critic_losses.append(float(np.mean(diff**2)))
            grads, _ = q.backward((2.0 * diff / n)[:, None])
            opt.step(q.params, grads)

        a, logp, (std, eps, u) = self._sample_actions(batch.obs, rng)
        sa_pi = np.concatenate([batch.obs, a], axis=1)
        q1_pi = self.q1.forward(sa_pi)[:, 0]
        q2_pi = self.q2.forward(sa_pi)[:, 0]
        use_q1 = q1_pi <= q2_pi
        # gradient of -min(q1, q2) flows through whichever critic is smaller
        _, d_sa_q2 = self.q2.backward(np.where(use_q1, 0.0, -1.0 / n)[:, None])
        _, d_sa_q1 = self.q1.backward(np.where(use_q1, -1.0 / n, 0.0)[:, None])
        d_a = (d_sa_q1 + d_sa_q2)[:, self.obs_dim :]
        actor_loss = float(np.mean(cfg.alpha_entropy * logp - np.minimum(q1_pi, q2_pi)))

        scale = cfg.alpha_entropy / n
        tanh_u = np.tanh(u)
        d_u = d_a * (1.0 - a**2) + scale * 2.0 * tanh_u
        d_mu = d_u
        d_log_std = d_u * std * eps - scale
        grads, _ = self.actor.backward((d_mu, d_log_std))
        entropy = float(-np.mean(logp))

        if not all(math.isfinite(x) for x in (*critic_losses, actor_loss, entropy)):
            raise TrainingDivergenceError("non-finite SAC loss", step=self.updates)
        self.actor_opt.step(self.actor.params, grads)

        self.q1_target.polyak_update(self.q1, cfg.polyak)
        self.q2_target.polyak_update(self.q2, cfg.polyak)
        self.updates += 1
        return LossReport(critic_losses[0], critic_losses[1], actor_loss, entropy)

    def save(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        self.actor.save(directory / "actor.mlp")
        self.q1.save(directory / "q1.mlp")
        self.q2.save(directory / "q2.mlp")


def policy_distribution(actor: Mlp, obs: np.ndarray) -> DiagGaussian2:
    """Action-space Gaussian of a gaussian-head actor for one observation."""
    mu, log_std = actor.forward(np.asarray(obs, dtype=np.float64))
    return DiagGaussian2.from_arrays(np.tanh(mu), np.exp(2.0 * log_std))


def fill_demos(
    buffer: ReplayBuffer,
    apf: ApfConfig,
    worlds: list[WorldSpec],
    episodes: int,
    seed: int,
) -> int:
    """Roll out the deterministic prior and store its transitions tagged ``demo``.

    Returns the number of transitions stored.
    """
    if episodes <= 0:
        return 0
    rng = seeding.stream(seed, seeding.DEMO)
    stored = 0
    successes = 0
    for episode in range(episodes):
        world = worlds[episode % len(worlds)]
        env = NavigationEnv(world)
        obs = env.reset(int(rng.integers(0, 2**31 - 1)))
        while not env.done:
            action = apf_action(env.scan, env.bearing, apf)
            result = env.step((action.v, action.w))
            terminal = result.done_reason in ("goal", "collision")
            buffer.add(
                obs.as_array(),
                (action.v, action.w),
                result.reward,
                result.observation.as_array(),
                terminal,
                source="demo",
            )
            obs = result.observation
            stored += 1
            if result.done_reason == "goal":
                successes += 1
    logger.info("Stored %d demo transitions from %d prior episodes (%d reached the goal)", stored, episodes, successes)
    return stored
