"""
Compartilhamento SIR - Offload Engine
Estado epidêmico por pacote e regras de transmissão em encontros,
comuns ao simulador de contatos e ao simulador espacial
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from modules.analytic import AnalyticResult, analyze
from modules.core_model import CapacityError, DomainError, ScenarioConfig
from modules.loadopt import (
    Coding,
    SourceAllocation,
    allocate_by_extinction,
    assign_copies,
    uncoded_even_allocation,
)

SUSCETIVEL, INFECCIOSO, RECUPERADO = 0, 1, 2


# ============================================
# ENCONTROS
# ============================================

@dataclass(frozen=True)
class MeetingEvent:
    """Entrada de um par de nós no alcance de rádio"""
    time: float
    u: int
    v: int
    type_pair: Tuple[int, int] = (0, 0)

    @property
    def sort_key(self) -> Tuple[float, int, int]:
        # (tempo, id do par)
        return (self.time, min(self.u, self.v), max(self.u, self.v))


def sort_meetings(meetings: Sequence[MeetingEvent]) -> List[MeetingEvent]:
    return sorted(meetings, key=lambda e: e.sort_key)


# ============================================
# FONTES
# ============================================

def resolve_sources(cfg: ScenarioConfig, sources=None,
                    result: Optional[AnalyticResult] = None) -> SourceAllocation:
    """
    Alocação efetiva das fontes: a dada, ou as contagens por tipo informadas,
    ou a do cenário (per_type ou beta). Sem nada informado, um pacote no tipo de
    menor extinção. Sem taxas de contato a ordem é a dos índices dos tipos.
    """
    if isinstance(sources, SourceAllocation):
        return sources
    if result is not None:
        w = result.extinction
    elif cfg.contact_rates is not None:
        w = analyze(cfg).extinction
    else:
        w = np.zeros(cfg.num_types)
    ordem = tuple(int(h) + 1 for h in np.argsort(w, kind="stable"))

    por_tipo = sources if sources is not None else cfg.sources.per_type
    if por_tipo is not None:
        por_tipo = tuple(int(b) for b in por_tipo)
        if len(por_tipo) != cfg.num_types or min(por_tipo) < 0 or sum(por_tipo) < 1:
            raise DomainError(f"fontes por tipo inválidas: {por_tipo}")
        if any(b > n for b, n in zip(por_tipo, cfg.counts)):
            raise CapacityError(f"fontes por tipo excedem N_h: {por_tipo}")
        return SourceAllocation(per_type_counts=por_tipo, ordering=ordem)
    return allocate_by_extinction(w, cfg.counts, cfg.sources.beta or 1)


def packet_sources(cfg: ScenarioConfig, allocation: SourceAllocation,
                   coding: Coding = Coding.ERASURE_CODED) -> List[np.ndarray]:
    """
    Nós-fonte de cada pacote. As fontes de um tipo são os primeiros beta_h nós
    do bloco desse tipo.
    Codificado: beta pacotes distintos, uma fonte cada.
    Sem código: M mensagens; as cópias de cada uma são fontes do mesmo pacote.
    """
    if len(allocation.per_type_counts) != cfg.num_types:
        raise DomainError("alocação com número de tipos diferente do cenário")
    primeiro = cfg.first_node_of_type()
    usados = np.zeros(cfg.num_types, dtype=int)
    slots = allocation.slots()
    nos = []
    for h in slots:
        nos.append(int(primeiro[h] + usados[h]))
        usados[h] += 1

    if Coding(coding) is Coding.ERASURE_CODED:
        return [np.array([n]) for n in nos]
    divisao = uncoded_even_allocation(cfg.message_count, len(slots))
    return [np.array([nos[p] for p in posicoes], dtype=int)
            for posicoes in assign_copies(divisao, slots)]


# ============================================
# ESTADO EPIDÊMICO
# ============================================

@dataclass
class EpidemicState:
    """
    Instante de recepção de cada pacote em cada nó (inf = suscetível).
    O nó é infeccioso para o pacote j em [t_recv, t_recv + tau) e recuperado depois.
    """
    node_types: np.ndarray
    active_period: np.ndarray
    recv_time: np.ndarray

    @classmethod
    def start(cls, cfg: ScenarioConfig, sources: Sequence[np.ndarray]) -> "EpidemicState":
        tipos = cfg.node_types()
        recv = np.full((len(sources), cfg.total_nodes), np.inf)
        for j, nos in enumerate(sources):
            recv[j, nos] = 0.0
        return cls(node_types=tipos, active_period=cfg.active_periods[tipos], recv_time=recv)

    @property
    def num_packets(self) -> int:
        return self.recv_time.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.recv_time.shape[1]

    def infectious(self, node: int, t: float, packets=None) -> np.ndarray:
        r = self.recv_time[:, node] if packets is None else self.recv_time[packets, node]
        return (r <= t) & (t < r + self.active_period[node])

    def susceptible(self, node: int, packets=None) -> np.ndarray:
        r = self.recv_time[:, node] if packets is None else self.recv_time[packets, node]
        return np.isinf(r)

    def meet(self, t: float, u: int, v: int, packets=None) -> List[Tuple[int, int]]:
        """
        Aplica um encontro nos dois sentidos. Só nós suscetíveis recebem.
        Retorna os pares (pacote, nó) infectados agora.
        """
        pk = np.arange(self.num_packets) if packets is None else np.atleast_1d(packets)
        u_para_v = self.infectious(u, t, pk) & self.susceptible(v, pk)
        v_para_u = self.infectious(v, t, pk) & self.susceptible(u, pk)
        novos = []
        for j in pk[u_para_v]:
            self.recv_time[j, v] = t
            novos.append((int(j), v))
        for j in pk[v_para_u]:
            self.recv_time[j, u] = t
            novos.append((int(j), u))
        return novos

    def state_codes(self, t: float) -> np.ndarray:
        """(P, N) com 0 = S, 1 = I, 2 = R"""
        codigos = np.full(self.recv_time.shape, SUSCETIVEL, dtype=np.int8)
        recebeu = self.recv_time <= t
        ativo = t < self.recv_time + self.active_period[None, :]
        codigos[recebeu & ativo] = INFECCIOSO
        codigos[recebeu & ~ativo] = RECUPERADO
        return codigos

    def compartment_counts(self, t: float) -> np.ndarray:
        """(P, 3) com #S, #I, #R por pacote"""
        codigos = self.state_codes(t)
        return np.stack([(codigos == c).sum(axis=1) for c in (SUSCETIVEL, INFECCIOSO, RECUPERADO)], axis=1)

    def received(self) -> np.ndarray:
        return np.isfinite(self.recv_time)

    def recipients_by_type(self, num_types: int) -> np.ndarray:
        um_quente = np.eye(num_types, dtype=int)[self.node_types]
        return self.received().astype(int) @ um_quente

    def distinct_packets(self) -> np.ndarray:
        return self.received().sum(axis=0)

    def recipient_sets(self) -> List[frozenset]:
        return [frozenset(np.flatnonzero(linha).tolist()) for linha in self.received()]


# ============================================
# RESULTADO DE UMA REPLICAÇÃO
# ============================================

def spread_out_classifier(recipients: int, threshold_fraction: float, total_nodes: int) -> bool:
    """Pacote espalhado quando atinge pelo menos threshold_fraction * N nós"""
    if not 0 < threshold_fraction < 1:
        raise DomainError(f"threshold_fraction deve estar em (0,1), recebido {threshold_fraction!r}")
    return recipients >= threshold_fraction * total_nodes


@dataclass(frozen=True)
class PacketOutcome:
    packet_id: int
    source_type: int             # id do tipo da primeira fonte
    recipients_by_type: Tuple[int, ...]
    spread_out: bool

    @property
    def recipients(self) -> int:
        return sum(self.recipients_by_type)


@dataclass(frozen=True)
class SimOutcome:
    """Uma replicação: pacotes, pacotes distintos por nó e complemento"""
    replication: int
    seed: Tuple[int, int]        # (semente mestre, índice)
    packets: Tuple[PacketOutcome, ...]
    distinct_per_node: np.ndarray = field(repr=False, compare=False)
    complement: int
    coding: str = Coding.ERASURE_CODED.value
    recipient_sets: Optional[Tuple[frozenset, ...]] = field(default=None, repr=False, compare=False)

    def to_rows(self, counts: Sequence[int]) -> List[dict]:
        linhas = []
        for p in self.packets:
            linha = {
                "replication": self.replication,
                "seed": self.seed[0],
                "seed_index": self.seed[1],
                "packet_id": p.packet_id,
                "source_type": p.source_type,
                "recipients": p.recipients,
                "spread_out": int(p.spread_out),
            }
            for h, (r, n) in enumerate(zip(p.recipients_by_type, counts), start=1):
                linha[f"fraction_type_{h}"] = r / n
            linha["complement"] = self.complement
            linhas.append(linha)
        return linhas


def build_outcome(state: EpidemicState, cfg: ScenarioConfig, sources: Sequence[np.ndarray],
                  replication: int, seed: Tuple[int, int], coding: Coding,
                  threshold_fraction: float, keep_sets: bool = False) -> SimOutcome:
    """Consolida o estado final: receptores por tipo, B por nó e sum (M - B)+"""
    por_tipo = state.recipients_by_type(cfg.num_types)
    N = cfg.total_nodes
    pacotes = tuple(
        PacketOutcome(
            packet_id=j,
            source_type=int(state.node_types[fontes[0]]) + 1,
            recipients_by_type=tuple(int(c) for c in por_tipo[j]),
            spread_out=spread_out_classifier(int(por_tipo[j].sum()), threshold_fraction, N),
        )
        for j, fontes in enumerate(sources)
    )
    B = state.distinct_packets()
    complemento = int(np.maximum(cfg.message_count - B, 0).sum())
    return SimOutcome(
        replication=replication,
        seed=seed,
        packets=pacotes,
        distinct_per_node=B,
        complement=complemento,
        coding=Coding(coding).value,
        recipient_sets=tuple(state.recipient_sets()) if keep_sets else None,
    )


# ============================================
# RESUMO DE UM LOTE
# ============================================

@dataclass(frozen=True)
class BatchSummary:
    """Médias por pacote sobre as replicações"""
    scenario: str
    replications: int
    seed: int
    frame: pd.DataFrame = field(repr=False)

    @property
    def spread_out_freq(self) -> np.ndarray:
        return self.frame["spread_out_freq"].to_numpy()

    def mean_fraction(self, packet_id: int = 0) -> np.ndarray:
        linha = self.frame.iloc[packet_id]
        return np.array([linha[c] for c in self.frame.columns if c.startswith("mean_fraction_type_")])

    def spread_fraction(self, packet_id: int = 0) -> np.ndarray:
        linha = self.frame.iloc[packet_id]
        return np.array([linha[c] for c in self.frame.columns if c.startswith("spread_fraction_type_")])

    @property
    def complement_mean(self) -> float:
        return float(self.frame["complement_mean"].iloc[0])


def summarize(outcomes: Sequence[SimOutcome], cfg: ScenarioConfig, seed: int = None) -> BatchSummary:
    """
    Resumo por pacote: frequência de espalhamento, fração média por tipo
    (incondicional e só entre as replicações em que o pacote espalhou)
    e média/desvio do complemento.
    """
    if not outcomes:
        raise DomainError("lote vazio")
    counts = cfg.counts
    H = cfg.num_types
    seed = outcomes[0].seed[0] if seed is None else seed
    comp = np.array([o.complement for o in outcomes], dtype=float)
    comp_std = float(comp.std(ddof=1)) if len(comp) > 1 else 0.0

    linhas = []
    for j in range(len(outcomes[0].packets)):
        receb = np.array([o.packets[j].recipients_by_type for o in outcomes], dtype=float) / counts
        espalhou = np.array([o.packets[j].spread_out for o in outcomes])
        linha = {
            "scenario": cfg.name,
            "packet_id": j,
            "source_type": outcomes[0].packets[j].source_type,
            "spread_out_freq": float(espalhou.mean()),
        }
        for h in range(H):
            linha[f"mean_fraction_type_{h + 1}"] = float(receb[:, h].mean())
        for h in range(H):
            linha[f"spread_fraction_type_{h + 1}"] = float(receb[espalhou, h].mean()) if espalhou.any() else float("nan")
        linha.update({
            "complement_mean": float(comp.mean()),
            "complement_std": comp_std,
            "replications": len(outcomes),
            "seed": seed,
        })
        linhas.append(linha)
    return BatchSummary(scenario=cfg.name, replications=len(outcomes), seed=seed, frame=pd.DataFrame(linhas))
