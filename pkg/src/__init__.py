# Pacote principal do Buddy: formato de fio, transporte, agente, runtime, cargas e harness
