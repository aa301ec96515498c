"""
Carga base abstrata: fase de envio, consumo reativo em finalize e relatório
"""
import hashlib
import logging
import time
from abc import ABC, abstractmethod
from typing import Any

import numpy as np

from src.runtime.handle import Handle, send_blocking
from .interfaces import IWorkload, WorkloadSpec, WorkReport, World


class RankState:
    """Estado local de um rank durante a execução"""

    def __init__(self):
        self.local_bytes = 0


class BaseWorkload(IWorkload, ABC):
    """Classe base para todas as cargas (Liskov Substitution Principle)"""

    name = "base"

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def run_rank(self, spec: WorkloadSpec, handle: Handle, world: World) -> WorkReport:
        started = time.perf_counter()
        state = self._setup(spec, world)

        def on_message(message: bytes) -> None:
            self._on_message(message, state, handle, world)

        self._send_phase(spec, handle, world, state, on_message)
        handle.finalize(handler=on_message)
        output = self._collect(state)
        wall_time = time.perf_counter() - started

        stats = handle.stats
        report = WorkReport(
            result_digest=self.digest(output),
            local_bytes=state.local_bytes,
            sent_bytes=stats.sent_bytes,
            sent_msgs=stats.sent_msgs,
            recv_msgs=stats.recv_msgs,
            wall_time=wall_time,
            output=output,
            runtime_stats=stats.to_dict(),
        )
        self.logger.debug(f"{self.name} rank {world.rank}: {stats.sent_msgs} enviadas, "
                          f"{stats.recv_msgs} recebidas, M:C={report.mc_ratio:.2f}")
        return report

    def send(self, handle: Handle, dst: int, payload, on_message) -> None:
        """Envio com contrapressão: consome entregas enquanto o pool está cheio"""
        send_blocking(handle, dst, payload, on_message)

    def send_reactive(self, handle: Handle, dst: int, payload) -> None:
        """Envio de dentro de um handler: apenas poll, sem reentrar no handler"""
        send_blocking(handle, dst, payload)

    @staticmethod
    def hash_bytes(*chunks) -> str:
        sha = hashlib.sha256()
        for chunk in chunks:
            sha.update(chunk if isinstance(chunk, (bytes, bytearray)) else np.ascontiguousarray(chunk).tobytes())
        return sha.hexdigest()

    def check(self, result: Any, expected: Any) -> bool:
        return self.digest(result) == self.digest(expected)

    @abstractmethod
    def _setup(self, spec: WorkloadSpec, world: World) -> RankState:
        pass

    @abstractmethod
    def _send_phase(self, spec: WorkloadSpec, handle: Handle, world: World,
                    state: RankState, on_message) -> None:
        pass

    @abstractmethod
    def _on_message(self, message: bytes, state: RankState, handle: Handle, world: World) -> None:
        pass

    @abstractmethod
    def _collect(self, state: RankState) -> Any:
        pass
