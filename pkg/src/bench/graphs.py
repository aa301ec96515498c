"""
Geração determinística de grafos e oráculos seriais de grafos
"""
from typing import Dict, List

import networkx as nx
import numpy as np

from .interfaces import WorkloadSpec

DEFAULT_MEAN_DEGREE = 16
MIN_WEIGHT = 1
MAX_WEIGHT = 10


def build_graph(spec: WorkloadSpec, weighted: bool = False) -> nx.Graph:
    """
    Grafo de Erdős–Rényi G(n=scale, p=mean_degree/(n-1)) com semente fixa.

    params['edges'] substitui o gerador por uma lista explícita de arestas
    (u, v) ou (u, v, peso).
    """
    n = spec.scale
    explicit = spec.params.get('edges')
    if explicit is not None:
        graph = nx.Graph()
        graph.add_nodes_from(range(n))
        for edge in explicit:
            weight = int(edge[2]) if len(edge) > 2 else MIN_WEIGHT
            graph.add_edge(int(edge[0]), int(edge[1]), weight=weight)
        return graph

    mean_degree = float(spec.params.get('mean_degree', DEFAULT_MEAN_DEGREE))
    p = min(1.0, mean_degree / (n - 1)) if n > 1 else 0.0
    graph = nx.fast_gnp_random_graph(n, p, seed=spec.seed)
    if weighted:
        rng = np.random.default_rng(spec.seed)
        edges = sorted((min(u, v), max(u, v)) for u, v in graph.edges())
        weights = rng.integers(MIN_WEIGHT, MAX_WEIGHT + 1, size=len(edges))
        for (u, v), w in zip(edges, weights):
            graph[u][v]['weight'] = int(w)
    return graph


def sorted_adjacency(graph: nx.Graph, dtype=np.int64) -> List[np.ndarray]:
    """Listas de vizinhos ordenadas, indexadas pelo vértice"""
    return [np.array(sorted(graph.adj[v]), dtype=dtype) for v in range(graph.number_of_nodes())]


def adjacency_bitset(graph: nx.Graph, lo: int, hi: int) -> np.ndarray:
    """Linhas de bits da matriz de adjacência para os vértices [lo, hi)"""
    n = graph.number_of_nodes()
    dense = np.zeros((hi - lo, n), dtype=bool)
    for v in range(lo, hi):
        dense[v - lo, list(graph.adj[v])] = True
    return np.packbits(dense, axis=1)


def brute_force_triangles(graph: nx.Graph) -> int:
    """Contagem O(n³) via traço de A³"""
    n = graph.number_of_nodes()
    if n < 3:
        return 0
    a = nx.to_numpy_array(graph, nodelist=list(range(n)), weight=None, dtype=np.int64)
    return int(np.trace(a @ a @ a)) // 6


def dijkstra_distances(graph: nx.Graph, source: int = 0) -> np.ndarray:
    """Distâncias a partir de source; -1 para vértices inalcançáveis"""
    n = graph.number_of_nodes()
    dist = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return dist
    lengths: Dict[int, int] = nx.single_source_dijkstra_path_length(graph, source, weight='weight')
    for v, d in lengths.items():
        dist[v] = d
    return dist
