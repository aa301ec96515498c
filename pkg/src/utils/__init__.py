# Utilitários: configuração, logging, erros, relógio e executor de testes
