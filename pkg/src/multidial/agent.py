"""Single deep Q-learning agent: replay memory, masked epsilon-greedy
selection, TD targets against a periodically synced frozen copy of the
online network, and minibatch updates.

Agents know nothing about dialogue; they see state vectors, action indices
local to their own action set, and scalar rewards.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import net


class AgentError(ValueError):
    pass


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayMemory:
    """Bounded FIFO buffer; eviction is strictly oldest-first."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise AgentError("replay capacity must be positive")
        self.capacity = capacity
        self._buffer: list[Transition] = []
        self._next = 0  # ring-buffer write cursor once full

    def __len__(self) -> int:
        return len(self._buffer)

    def append(self, transition: Transition) -> None:
        if len(self._buffer) < self.capacity:
            self._buffer.append(transition)
        else:
            self._buffer[self._next] = transition
            self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, k: int) -> list[Transition]:
        """Uniform sample with replacement."""
        if not self._buffer:
            raise AgentError("cannot sample from an empty replay memory")
        idx = rng.integers(0, len(self._buffer), size=k)
        return [self._buffer[i] for i in idx]

    def __contains__(self, transition: Transition) -> bool:
        return any(t is transition for t in self._buffer)


@dataclass
class AgentHyperparams:
    replay_capacity: int = 10000
    burning_steps: int = 1000
    discount: float = 0.7
    epsilon_start: float = 1.0
    epsilon_min: float = 0.001
    batch_size: int = 32
    learning_steps: int = 30000
    target_sync_period: int = 1000
    learning_rate: float = 0.01
    l2_decay: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.epsilon_min <= self.epsilon_start <= 1.0):
            raise AgentError("need 0 <= epsilon_min <= epsilon_start <= 1")
        if not (0.0 <= self.discount < 1.0):
            raise AgentError("need 0 <= discount < 1")
        if self.target_sync_period <= 0:
            raise AgentError("target_sync_period must be positive")


class DqnAgent:
    """Online network, frozen target network and replay memory for one domain."""

    def __init__(
        self,
        state_dim: int,
        action_count: int,
        hyper: AgentHyperparams | None = None,
        seed: int = 0,
        hidden: tuple[int, ...] = (80, 80),
        activation: str = "relu",
    ):
        self.hyper = hyper or AgentHyperparams()
        self.action_count = action_count
        self.online = net.init_network(
            [state_dim, *hidden, action_count], activation, seed=seed
        )
        self.target = net.clone_network(self.online)
        self.memory = ReplayMemory(self.hyper.replay_capacity)
        self.step_counter = 0
        self._cfg = net.TrainConfig(
            learning_rate=self.hyper.learning_rate, l2_decay=self.hyper.l2_decay
        )

    @property
    def state_dim(self) -> int:
        return self.online.input_dim

    def q_values(self, state: np.ndarray) -> np.ndarray:
        return net.forward(self.online, state)

    def select_action(
        self,
        state: np.ndarray,
        valid: set[int] | list[int],
        epsilon: float,
        rng: np.random.Generator,
    ) -> int:
        """Epsilon-greedy over the valid subset only.

        Greedy ties break toward the lowest action index so selection is
        deterministic for a fixed network and state.
        """
        ordered = sorted(valid)
        if not ordered:
            raise AgentError("valid action set must be nonempty")
        if ordered[-1] >= self.action_count or ordered[0] < 0:
            raise AgentError(f"valid set {ordered} outside 0..{self.action_count - 1}")
        if rng.random() < epsilon:
            return ordered[int(rng.integers(len(ordered)))]
        q = self.q_values(state)
        best = ordered[0]
        for a in ordered[1:]:
            if q[a] > q[best]:
                best = a
        return best

    def q_target(self, transition: Transition) -> float:
        """Bellman target: r for terminal steps, else r + discount * max_a'
        of the frozen target network at the next state."""
        if transition.terminal:
            return float(transition.reward)
        nxt = net.forward(self.target, transition.next_state)
        return float(transition.reward + self.hyper.discount * np.max(nxt))

    def store(self, transition: Transition) -> None:
        if not np.isfinite(transition.reward):
            raise AgentError("reward must be finite")
        if not (0 <= transition.action < self.action_count):
            raise AgentError(f"action {transition.action} outside the action set")
        self.memory.append(transition)

    def train_on_minibatch(self, rng: np.random.Generator) -> float | None:
        """One learning step; a no-op (returns None) until burn-in completes.

        Samples uniformly with replacement, regresses only the taken action's
        Q-value toward its target, and resyncs the target network every
        ``target_sync_period`` learning steps.
        """
        if len(self.memory) < self.hyper.burning_steps:
            return None
        batch = self.memory.sample(rng, self.hyper.batch_size)
        states = np.stack([t.state for t in batch])
        next_states = np.stack([t.next_state for t in batch])
        rewards = np.array([t.reward for t in batch])
        nonterminal = np.array([0.0 if t.terminal else 1.0 for t in batch])

        next_q = net.forward_batch(self.target, next_states)
        targets_scalar = rewards + self.hyper.discount * nonterminal * next_q.max(axis=1)

        targets = np.zeros((len(batch), self.action_count))
        masks = np.zeros_like(targets)
        for j, t in enumerate(batch):
            targets[j, t.action] = targets_scalar[j]
            masks[j, t.action] = 1.0

        loss = net.sgd_step_arrays(
            self.online, states, targets, masks, self._cfg, "squared_error"
        )
        self.step_counter += 1
        if self.step_counter % self.hyper.target_sync_period == 0:
            self.sync_target()
        return loss

    def sync_target(self) -> None:
        net.clone_weights(self.online, self.target)

    def decay_epsilon(self) -> float:
        """Linear anneal from epsilon_start to epsilon_min over
        ``learning_steps`` learning steps, held at the floor afterwards."""
        h = self.hyper
        frac = min(1.0, self.step_counter / h.learning_steps) if h.learning_steps else 1.0
        return h.epsilon_start + (h.epsilon_min - h.epsilon_start) * frac

    # -- checkpointing ----------------------------------------------------

    def save(self, directory: str, name: str) -> None:
        os.makedirs(directory, exist_ok=True)
        net.save_network(self.online, os.path.join(directory, f"{name}.online.net"))
        net.save_network(self.target, os.path.join(directory, f"{name}.target.net"))
        meta = {
            "step_counter": self.step_counter,
            "epsilon": self.decay_epsilon(),
            "action_count": self.action_count,
            "hyper": self.hyper.__dict__,
        }
        with open(os.path.join(directory, f"{name}.agent.json"), "w") as fh:
            json.dump(meta, fh, indent=2)

    @classmethod
    def load(cls, directory: str, name: str) -> "DqnAgent":
        with open(os.path.join(directory, f"{name}.agent.json")) as fh:
            meta = json.load(fh)
        online = net.load_network(os.path.join(directory, f"{name}.online.net"))
        hyper = AgentHyperparams(**meta["hyper"])
        agent = cls.__new__(cls)
        agent.hyper = hyper
        agent.action_count = meta["action_count"]
        agent.online = online
        agent.target = net.load_network(os.path.join(directory, f"{name}.target.net"))
        agent.memory = ReplayMemory(hyper.replay_capacity)
        agent.step_counter = meta["step_counter"]
        agent._cfg = net.TrainConfig(
            learning_rate=hyper.learning_rate, l2_decay=hyper.l2_decay
        )
        return agent
