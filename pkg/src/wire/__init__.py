# Pacote do formato de fio (cabeçalhos e bundles)
from .codec import (
    HEADER_SIZE, CONTROL_RANK, OP_LOCAL_DONE, OP_ROUND, OP_ACK, OP_TERMINATE,
    encode_header, decode_header
)
from .bundle import Bundle, bundle_append, bundle_iterate
