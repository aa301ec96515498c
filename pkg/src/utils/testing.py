"""
Executor das suítes de teste em modo script
"""
import traceback
from typing import Callable, List, Tuple


def run_test_suite(title: str, tests: List[Tuple[str, Callable[[], None]]]) -> bool:
    """Executa todos os testes e imprime o resumo"""
    print("=" * 60)
    print(title)
    print("=" * 60)

    results = []
    for test_name, test_func in tests:
        print(f"\n🧪 {test_name}")
        try:
            test_func()
            print("✅ Passou")
            results.append((test_name, True))
        except AssertionError as e:
            print(f"❌ Asserção falhou: {e}")
            results.append((test_name, False))
        except Exception as e:
            print(f"❌ Erro inesperado: {str(e)}")
            traceback.print_exc()
            results.append((test_name, False))

    print("\n" + "=" * 60)
    print("RESUMO DOS TESTES")
    print("=" * 60)

    passed = 0
    for test_name, result in results:
        status = "✅ PASSOU" if result else "❌ FALHOU"
        print(f"{test_name}: {status}")
        if result:
            passed += 1

    print(f"\nResultado: {passed}/{len(results)} testes passaram")
    return passed == len(results)
