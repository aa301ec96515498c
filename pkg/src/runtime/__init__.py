# Pacote da biblioteca de runtime
from .handle import (
    Handle, RuntimeConfig, RuntimeStats, init, send, flush, poll, recv_next, finalize,
    send_blocking, rank_link_config
)
