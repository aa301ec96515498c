"""
Hierarquia de exceções do Buddy
"""
from typing import Dict, Any, Optional


class BuddyError(Exception):
    """Base de todos os erros do motor de comunicação"""


class ConfigurationError(BuddyError, ValueError):
    """Topologia, rank ou parâmetro de configuração inválido"""


class FramingError(BuddyError, ValueError):
    """Cabeçalho ou frame com tamanho inválido"""


class CorruptBundleError(FramingError):
    """Bundle cujos registros não cobrem [0, tail) corretamente"""


class OversizeMessageError(BuddyError, ValueError):
    """Mensagem que nunca cabe em um bundle (erro permanente)"""


class StartupError(BuddyError, ConnectionError):
    """Falha no bootstrap das conexões"""


class LinkError(BuddyError, ConnectionError):
    """Falha de enlace reportada pelo transporte"""


class QuiescenceTimeoutError(BuddyError, TimeoutError):
    """Quiescência global não atingida dentro do prazo"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DeploymentError(BuddyError, RuntimeError):
    """Falha de um agente ou rank durante a implantação de um cenário"""
