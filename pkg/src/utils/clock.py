"""
Relógios injetáveis para timeouts de flush e ociosidade
"""
import time
import threading
from abc import ABC, abstractmethod


class IClock(ABC):
    """Interface de fonte de tempo (segundos, monotônica)"""

    @abstractmethod
    def now(self) -> float:
        """Retorna o instante atual em segundos"""
        pass


class MonotonicClock(IClock):
    """Relógio real baseado em perf_counter"""

    def now(self) -> float:
        return time.perf_counter()


class ManualClock(IClock):
    """Relógio controlado pelo teste"""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def advance(self, seconds: float) -> float:
        with self._lock:
            self._now += seconds
            return self._now

    def advance_us(self, microseconds: float) -> float:
        return self.advance(microseconds / 1e6)


def us_to_seconds(value: float) -> float:
    return value / 1e6
