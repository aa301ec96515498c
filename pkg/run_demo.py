"""
Script de demonstração completa do Buddy: suítes de teste e um cenário curto
"""
import sys
import os
import time

# Adiciona o diretório src ao path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

SUITES = ['test_wire', 'test_transport', 'test_agent', 'test_runtime', 'test_bench', 'test_harness',
          'test_pipeline']


def run_demo():
    """Executa as suítes e depois o cenário de histograma"""
    print("🚀 DEMONSTRAÇÃO DO BUDDY")
    print("=" * 60)

    # 1. Verificar configuração
    print("\n1️⃣ Verificando configuração...")
    config_path = os.path.join("configs", "histogram.conf")
    if not os.path.exists(config_path):
        print(f"❌ Configuração não encontrada: {config_path}")
        return False
    print("✅ Configuração encontrada!")

    # 2. Executar testes
    print("\n2️⃣ Executando testes...")
    for module_name in SUITES:
        try:
            module = __import__(module_name)
            if not module.main():
                print(f"❌ Suíte {module_name} falhou. Verifique os erros acima.")
                return False
        except Exception as e:
            print(f"❌ Erro nos testes de {module_name}: {str(e)}")
            return False

    # 3. Executar cenário
    print("\n3️⃣ Executando cenário de histograma...")
    start_time = time.time()

    try:
        from main import main as run_harness
        code = run_harness(['run', '--config', config_path])

        total_time = time.time() - start_time
        print(f"\n⏱️  Tempo total da demonstração: {total_time:.2f}s")

        print(f"\n📁 Arquivos gerados:")
        print("   - results/histogram/metrics.json (métricas por repetição)")
        print("   - results/histogram/summary.csv (tabela resumo)")
        print("   - results/histogram/REPORT.md (relatório executivo)")
        print("   - buddy.log (logs de execução)")

        if code != 0:
            print("\n⚠️  Cenário concluído com falhas. Veja REPORT.md.")
            return False
        print("\n🎉 DEMONSTRAÇÃO CONCLUÍDA COM SUCESSO!")
        print("=" * 60)
        return True

    except Exception as e:
        print(f"❌ Erro na execução do harness: {str(e)}")
        return False


if __name__ == "__main__":
    success = run_demo()
    if not success:
        sys.exit(1)
