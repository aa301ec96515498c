# Pacote do agente de roteamento
from .agent_config import AgentConfig
from .routing_table import LOCAL, REMOTE, NextHop, Topology, RoutingTable, build_routing_table
from .send_state import AgentThreadStats, HopBuffers, ThreadSendState, get_buf
from .routing_kernel import route, replay_blocklist, replay_pending, flush_ready, idle_flush, complete_send, drain_returned
from .quiescence import QuiescenceDetector
from .routing_agent import RoutingAgent, agent_link_config, run_agent
