"""
Script principal do harness de experimentos do Buddy
Motor de comunicação fire-and-forget com agente de roteamento desacoplado
"""
import argparse
import os
import sys
from datetime import datetime
from typing import List, Optional

# Adiciona o diretório src ao path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from src.utils.config import setup_logging, get_default_config, load_config
from src.harness.scenario import ScenarioConfig, ScenarioResult
from src.harness.experiments import run_scenario, sweep, weak_scale, compare_placements
from src.harness.report import emit_report, exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Harness de experimentos do Buddy")
    parser.add_argument('--output', default=None, help="Diretório de saída (padrão: harness.output_dir)")
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help="Executa um cenário")
    run.add_argument('--config', default=None)

    sweep_cmd = commands.add_parser('sweep', help="Varre um parâmetro do agente ou do runtime")
    sweep_cmd.add_argument('--config', default=None)
    sweep_cmd.add_argument('--axis', required=True)
    sweep_cmd.add_argument('--values', required=True, help="Valores separados por vírgula")

    scale = commands.add_parser('scale', help="Escala fraca sobre números de nós")
    scale.add_argument('--config', default=None)
    scale.add_argument('--nodes', required=True, help="Números de nós separados por vírgula")

    compare = commands.add_parser('compare', help="Compara os posicionamentos inline e sidecar")
    compare.add_argument('--config', default=None)
    compare.add_argument('--workloads', default=None, help="Cargas separadas por vírgula")
    return parser


def _split(text: Optional[str]) -> List[str]:
    return [item.strip() for item in text.split(',') if item.strip()] if text else []


def main(argv: Optional[List[str]] = None) -> int:
    """Função principal: executa o comando pedido e grava os relatórios"""
    args = build_parser().parse_args(argv)

    print("=" * 80)
    print("BUDDY - HARNESS DE EXPERIMENTOS DE COMUNICAÇÃO")
    print("=" * 80)
    print(f"Início da execução: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print()

    try:
        # 1. Configuração inicial
        print("1. Configurando ambiente...")
        config = load_config(args.config) if args.config else get_default_config()
        setup_logging(config['logging']['level'], config['logging'].get('file'))
        base = ScenarioConfig.from_config(config)
        output_dir = args.output or config['harness']['output_dir']

        # 2. Execução
        print(f"2. Executando '{args.command}' ({base.workload.kind}, {base.placement}, "
              f"{base.nodes}x{base.ranks_per_node} ranks)...")
        print("-" * 50)
        results: List[ScenarioResult] = []
        table = None
        if args.command == 'run':
            results.append(run_scenario(base))
        elif args.command == 'sweep':
            table = sweep(base, args.axis, [int(v) for v in _split(args.values)], results=results)
        elif args.command == 'scale':
            table = weak_scale(base, [int(v) for v in _split(args.nodes)], results=results)
        elif args.command == 'compare':
            table = compare_placements(base, _split(args.workloads) or None, results=results)
        print("-" * 50)

        # 3. Resultados
        print("3. Resultados obtidos:")
        for result in results:
            print(f"   {result.name}: status={result.status}, "
                  f"tempo={result.mean('wall_time'):.4f}s, "
                  f"bytes roteados={result.mean('routed_bytes'):.0f}, "
                  f"M/C={result.mean('mc_ratio'):.2f}")
        if table is not None:
            print(table.to_string(index=False))

        # 4. Relatórios
        print("4. Gerando relatórios...")
        emit_report(results, output_dir, table)
        print(f"   Relatórios salvos em: {output_dir}")

        code = exit_code(results)
        print()
        print("=" * 80)
        print("EXECUÇÃO CONCLUÍDA COM SUCESSO!" if code == 0 else "EXECUÇÃO CONCLUÍDA COM FALHAS")
        print(f"Fim da execução: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        print("=" * 80)
        return code

    except Exception as e:
        print(f"ERRO na execução do harness: {str(e)}")
        print("Verifique o arquivo de log para mais detalhes.")
        raise


if __name__ == "__main__":
    sys.exit(main())
