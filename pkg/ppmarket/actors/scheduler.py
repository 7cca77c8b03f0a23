"""
Single-threaded deterministic scheduler.

Each step hands committed transaction results to their submitters, then
ledger events to every actor in registration order, then advances the clock
by one block timeout and ticks the ledger. Same actors and same seed, same
ledger, byte for byte.
"""
import logging
from typing import Any, Callable, Dict, List, Tuple

from ..encoding import derive_id
from ..exceptions import SchedulerStalled
from ..ledger import Ledger, TransactionEnvelope, TxType
from ..ledger.events import Subscription
from ..offchain import ObjectStore
from .base import Actor

# Configure logging
logger = logging.getLogger(__name__)


class Scheduler:
    """Drives actors against a ledger with a virtual millisecond clock."""

    def __init__(self, ledger: Ledger, store: ObjectStore, run_tag: str, step_ms: int = 0):
        self.ledger = ledger
        self.store = store
        self.run_tag = run_tag
        self.step_ms = step_ms or ledger.config.block_timeout_ms
        self.now = 0
        self.steps = 0
        self.actors: List[Tuple[Actor, Subscription]] = []
        self._outstanding: Dict[str, Tuple[Actor, Any]] = {}
        self._counters: Dict[str, int] = {}
        self._ready_results: List[str] = []

    def register(self, actor: Actor) -> Actor:
        actor.attach(self)
        self.actors.append((actor, self.ledger.subscribe()))
        return actor

    def submit(self, actor: Actor, tx_type: TxType, args: List[str], tag: Any = None) -> str:
        counter = self._counters.get(actor.name, 0)
        self._counters[actor.name] = counter + 1
        tx_id = derive_id(self.run_tag, actor.name, str(counter))
        env = TransactionEnvelope(
            tx_id=tx_id,
            tx_type=tx_type.value,
            caller=actor.member_id or "",
            args=list(args),
            submit_time=self.now,
        )
        self.ledger.submit(env)
        self._outstanding[tx_id] = (actor, tag)
        return tx_id

    @property
    def quiescent(self) -> bool:
        return (
            self.ledger.pending_count == 0
            and not self._ready_results
            and all(sub.pending() == 0 for _, sub in self.actors)
        )

    def step(self) -> None:
        ready, self._ready_results = self._ready_results, []
        for tx_id in ready:
            actor, tag = self._outstanding.pop(tx_id)
            actor.deliver_result(self.ledger.result(tx_id), tag)
        for actor, sub in self.actors:
            for event in sub.drain():
                actor.deliver_event(event)

        self.now += self.step_ms
        self.steps += 1
        for block in self.ledger.tick(self.now):
            for btx in block.txs:
                if btx.tx.tx_id in self._outstanding:
                    self._ready_results.append(btx.tx.tx_id)

    def run_until(self, goal: Callable[[], bool], max_steps: int = 10_000, what: str = "goal") -> int:
        """Step until goal() holds.

        Raises:
            SchedulerStalled: nothing left to deliver or commit, or max_steps
                exhausted, before goal() holds
        """
        taken = 0
        while not goal():
            if self.quiescent and taken > 0:
                raise SchedulerStalled(f"no progress possible before {what} (t={self.now})")
            if taken >= max_steps:
                raise SchedulerStalled(f"{what} not reached within {max_steps} steps")
            self.step()
            taken += 1
        logger.debug(f"Reached {what} after {taken} steps at t={self.now}")
        return taken
