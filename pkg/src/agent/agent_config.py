"""
Configuração do agente de roteamento
"""
from dataclasses import dataclass, fields
from typing import Any, Dict

from src.utils.errors import ConfigurationError


@dataclass
class AgentConfig:
    """Parâmetros do agente; timeouts em microssegundos"""
    remote_buf_size: int = 4096
    local_buf_size: int = 4096
    bufs_per_dest: int = 4
    routing_threads: int = 8
    flush_timeout: float = 500
    idle_timeout: float = 5000
    runtime_buf_size: int = 4096
    poll_max: int = 64
    quiescence_interval: float = 500
    idle_backoff: float = 0.0001

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'AgentConfig':
        known = {f.name for f in fields(cls)}
        config = cls(**{k: v for k, v in (values or {}).items() if k in known})
        config.validate()
        return config

    def validate(self) -> None:
        if self.remote_buf_size < 16 or self.local_buf_size < 16:
            raise ConfigurationError("remote_buf_size e local_buf_size devem ser >= 16")
        if self.routing_threads < 1:
            raise ConfigurationError("routing_threads deve ser >= 1")
        if self.bufs_per_dest < 1:
            raise ConfigurationError("bufs_per_dest deve ser >= 1")
        if self.idle_timeout < self.flush_timeout:
            raise ConfigurationError("idle_timeout deve ser >= flush_timeout")
        if self.poll_max < 1:
            raise ConfigurationError("poll_max deve ser >= 1")

    @property
    def recv_buf_size(self) -> int:
        """Capacidade dos buffers de recepção: cabe qualquer bundle de entrada"""
        return max(self.remote_buf_size, self.local_buf_size, self.runtime_buf_size)

    @property
    def flush_timeout_s(self) -> float:
        return self.flush_timeout / 1e6

    @property
    def idle_timeout_s(self) -> float:
        return self.idle_timeout / 1e6

    @property
    def quiescence_interval_s(self) -> float:
        return self.quiescence_interval / 1e6
