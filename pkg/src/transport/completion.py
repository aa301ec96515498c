"""
Entradas da fila de completions
"""
from dataclasses import dataclass
from typing import Optional

from src.wire.bundle import Bundle

SEND = "send"
RECV = "recv"

STATUS_OK = "ok"
STATUS_ERROR = "error"


@dataclass
class Completion:
    """Completion de envio ou recepção (modela uma entrada de CQ)"""
    kind: str
    peer: str
    buffer_id: int
    length: int = 0
    status: str = STATUS_OK
    bundle: Optional[Bundle] = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK
