"""
Sistema de configuração centralizada
"""
import copy
import logging
from typing import Dict, Any, Optional

from .errors import ConfigurationError


def setup_logging(level: str = "INFO", log_file: Optional[str] = "buddy.log") -> None:
    """Configura o sistema de logging"""
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers
    )


def get_default_config() -> Dict[str, Any]:
    """Retorna configuração padrão do agente, runtime e harness"""
    return {
        'scenario': {
            'name': 'default',
            'placement': 'inline',
            'nodes': 1,
            'ranks_per_node': 2,
            'link_speed': 10e9,
            'repetitions': 5
        },
        'agent': {
            'remote_buf_size': 4096,
            'local_buf_size': 4096,
            'bufs_per_dest': 4,
            'routing_threads': 8,
            'flush_timeout': 500,
            'idle_timeout': 5000,
            'runtime_buf_size': 4096,
            'poll_max': 64,
            'quiescence_interval': 500,
            'idle_backoff': 0.0001
        },
        'runtime': {
            'runtime_bufs': 8,
            'buf_size': 4096,
            'flush_timeout': 500,
            'recv_buf_size': 0,
            'finalize_deadline': 30.0,
            'poll_max': 64
        },
        'transport': {
            'credits': 16,
            'connect_timeout': 10.0,
            'host': '127.0.0.1'
        },
        'workload': {
            'kind': 'histogram',
            'scale': 4096,
            'seed': 42,
            'mc_target': 0.0,
            'params': {}
        },
        'harness': {
            'output_dir': 'results',
            'cache_bytes': 32 * 1024 * 1024,
            'run_timeout': 300.0
        },
        'logging': {
            'level': 'INFO',
            'file': 'buddy.log'
        },
        'topology': {}
    }


def parse_value(raw: str) -> Any:
    """Converte o texto de um valor de configuração para o tipo mais específico"""
    value = raw.strip()
    if value.lower() in ('true', 'yes', 'on'):
        return True
    if value.lower() in ('false', 'no', 'off'):
        return False
    # Listas simples; entradas de topologia ("host:port | ranks") ficam como texto
    if ',' in value and '|' not in value:
        return [parse_value(item) for item in value.split(',') if item.strip()]
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def merge_config(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Mescla recursivamente overrides sobre base (sem alterar os argumentos)"""
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_config_text(text: str) -> Dict[str, Any]:
    """Lê linhas 'secao.chave = valor' em um dicionário aninhado"""
    result: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigurationError(f"Linha {lineno} sem '=': {line!r}")
        key, raw = line.split('=', 1)
        parts = [part.strip() for part in key.strip().split('.') if part.strip()]
        if not parts:
            raise ConfigurationError(f"Linha {lineno} sem chave")
        node = result
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"Chave conflitante na linha {lineno}: {key.strip()}")
        node[parts[-1]] = parse_value(raw)
    return result


def load_config(path: str) -> Dict[str, Any]:
    """Carrega um arquivo de configuração chave-valor sobre os padrões"""
    logger = logging.getLogger(__name__)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            overrides = parse_config_text(f.read())
    except FileNotFoundError:
        logger.error(f"Arquivo de configuração não encontrado: {path}")
        raise
    logger.info(f"Configuração carregada de: {path}")
    return merge_config(get_default_config(), overrides)
