"""
Otimizador de Carga - Offload Engine
Carga celular beta + Y, alocação das fontes e referência sem codificação
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binom

from config import COLUNAS_CARGA
from modules.analytic import AnalyticResult, analyze
from modules.core_model import CapacityError, DomainError, ScenarioConfig

log = logging.getLogger(__name__)

MODELOS_SEM_CODIGO = ("multi_source", "independent")


class Coding(str, Enum):
    ERASURE_CODED = "erasure_coded"
    UNCODED = "uncoded"


# ============================================
# ESTRUTURAS DE DADOS
# ============================================

@dataclass(frozen=True)
class LoadEntry:
    beta: int
    Y: float

    @property
    def total(self) -> float:
        return self.beta + self.Y


@dataclass(frozen=True)
class LoadCurve:
    """Curva beta -> beta + Y e o ótimo (menor beta em caso de empate)"""
    entries: Tuple[LoadEntry, ...]
    coding: Coding
    baseline: float   # N * M, sem cooperação

    @property
    def optimum(self) -> Tuple[int, float]:
        melhor = min(self.entries, key=lambda e: (e.total, e.beta))
        return melhor.beta, melhor.total

    def total_at(self, beta: int) -> float:
        for e in self.entries:
            if e.beta == beta:
                return e.total
        raise KeyError(beta)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(e.beta, e.Y, e.total, self.coding.value) for e in self.entries],
            columns=COLUNAS_CARGA,
        )


@dataclass(frozen=True)
class SourceAllocation:
    """beta_h fontes por tipo; ordering = ids dos tipos do menor para o maior w_h"""
    per_type_counts: Tuple[int, ...]
    ordering: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_type_counts", tuple(int(b) for b in self.per_type_counts))
        object.__setattr__(self, "ordering", tuple(int(h) for h in self.ordering))

    @property
    def beta(self) -> int:
        return sum(self.per_type_counts)

    def slots(self) -> List[int]:
        """Índice de tipo (base 0) de cada pacote, na ordem de preenchimento"""
        ordem = []
        for tipo_id in self.ordering:
            ordem.extend([tipo_id - 1] * self.per_type_counts[tipo_id - 1])
        return ordem


# ============================================
# CARGA DO COMPLEMENTO
# ============================================

def _checar_probabilidade(p, nome: str):
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any(p < 0) or np.any(p > 1):
        raise DomainError(f"{nome} deve estar em [0,1]")
    return p


def complement_load_coded(cfg: ScenarioConfig, beta: int, z1: float) -> float:
    """
    Y = N * E[(M - B)+] com B ~ Binomial(beta, z1).
    Só os termos b < M contribuem; pmf avaliada em escala logarítmica.
    """
    _checar_probabilidade(z1, "z1")
    if int(beta) != beta or beta < 1:
        raise DomainError(f"beta deve ser inteiro >= 1, recebido {beta!r}")
    M = cfg.message_count
    b = np.arange(0, min(M - 1, int(beta)) + 1)
    pmf = np.exp(binom.logpmf(b, int(beta), float(z1)))
    return float(cfg.total_nodes * np.sum((M - b) * pmf))


def _distribuicao_truncada(probs: np.ndarray, M: int):
    """
    Gera, pacote a pacote, P(B = b) para b < M com B Poisson-binomial.
    O array devolvido é o mesmo a cada passo, atualizado no lugar.
    """
    dist = np.zeros(M)
    dist[0] = 1.0
    for p in probs:
        dist[1:] = dist[1:] * (1.0 - p) + dist[:-1] * p
        dist[0] *= 1.0 - p
        yield dist


def complement_load_heterogeneous(cfg: ScenarioConfig, spread_probabilities: Sequence[float]) -> float:
    """Y = N * E[(M - B)+] com B soma de Bernoullis independentes (uma por pacote)"""
    probs = _checar_probabilidade(spread_probabilities, "spread_probabilities")
    M = cfg.message_count
    pesos = M - np.arange(M)
    dist = np.eye(1, M)[0]   # sem pacotes, B = 0
    for parcial in _distribuicao_truncada(probs, M):
        dist = parcial
    return float(cfg.total_nodes * pesos @ dist)


# ============================================
# ALOCAÇÃO DAS FONTES
# ============================================

def allocate_by_extinction(w: Sequence[float], counts: Sequence[int], beta: int) -> SourceAllocation:
    """
    Preenche os tipos do menor para o maior w_h (empate pelo índice do tipo),
    transbordando para o próximo tipo quando beta passa de N_h.
    """
    w = np.asarray(w, dtype=float)
    counts = np.asarray(counts, dtype=int)
    if int(beta) != beta or beta < 0:
        raise DomainError(f"beta deve ser inteiro >= 0, recebido {beta!r}")
    if beta > counts.sum():
        raise CapacityError(f"beta={beta} excede o total de nós N={int(counts.sum())}")

    ordem = np.argsort(w, kind="stable")
    por_tipo = np.zeros(len(counts), dtype=int)
    restante = int(beta)
    for h in ordem:
        usar = min(restante, int(counts[h]))
        por_tipo[h] = usar
        restante -= usar
        if restante == 0:
            break
    return SourceAllocation(per_type_counts=tuple(por_tipo), ordering=tuple(int(h) + 1 for h in ordem))


def allocate_sources(cfg: ScenarioConfig, beta: int, result: Optional[AnalyticResult] = None) -> SourceAllocation:
    """beta pacotes distintos em beta nós distintos, tipos de menor extinção primeiro"""
    res = result if result is not None else analyze(cfg)
    return allocate_by_extinction(res.extinction, cfg.counts, beta)


def packet_spread_probabilities(cfg: ScenarioConfig, beta: int,
                                result: Optional[AnalyticResult] = None) -> np.ndarray:
    """Probabilidade de cada pacote atingir um nó, com uma fonte por pacote"""
    res = result if result is not None else analyze(cfg)
    slots = allocate_by_extinction(res.extinction, cfg.counts, beta).slots()
    return res.mean_fraction * (1.0 - res.extinction[slots])


# ============================================
# REFERÊNCIA SEM CODIFICAÇÃO
# ============================================

def uncoded_even_allocation(M: int, beta: int) -> List[int]:
    """Divide beta cópias entre M mensagens; o resto vai para os menores índices"""
    if M < 1:
        raise DomainError("M deve ser >= 1")
    if beta < 0:
        raise DomainError("beta deve ser >= 0")
    q, r = divmod(int(beta), int(M))
    return [q + 1] * r + [q] * (M - r)


def assign_copies(allocation: Sequence[int], slots: Sequence[int]) -> List[List[int]]:
    """
    Distribui as posições de fonte entre as mensagens em rodízio,
    pulando as que já receberam todas as suas cópias.
    Retorna, por mensagem, a lista de índices de posição.
    """
    faltam = list(allocation)
    por_msg = [[] for _ in faltam]
    m = 0
    for pos in range(len(slots)):
        while faltam[m] == 0:
            m = (m + 1) % len(faltam)
        por_msg[m].append(pos)
        faltam[m] -= 1
        m = (m + 1) % len(faltam)
    return por_msg


def complement_load_uncoded(cfg: ScenarioConfig, allocation: Sequence[int],
                            result: Optional[AnalyticResult] = None,
                            model: str = "multi_source") -> float:
    """
    Y = N * sum_m P(nó não recebe nenhuma cópia da mensagem m).
    multi_source: 1 - z(beta_m) com as cópias da mensagem como fontes de um mesmo pacote.
    independent: cada cópia se espalha sozinha; P = prod_t (1 - z(e_t)).
    """
    if model not in MODELOS_SEM_CODIGO:
        raise DomainError(f"modelo {model!r} fora de {MODELOS_SEM_CODIGO}")
    allocation = [int(b) for b in allocation]
    if len(allocation) != cfg.message_count or any(b < 0 for b in allocation):
        raise DomainError(f"alocação deve ter {cfg.message_count} entradas >= 0")

    beta = sum(allocation)
    N = cfg.total_nodes
    if beta == 0:
        return float(N * cfg.message_count)

    res = result if result is not None else analyze(cfg)
    slots = allocate_by_extinction(res.extinction, cfg.counts, beta).slots()
    por_msg = assign_copies(allocation, slots)

    perda = 0.0
    for posicoes in por_msg:
        tipos = [slots[p] for p in posicoes]
        if not tipos:
            perda += 1.0
        elif model == "multi_source":
            fontes = np.bincount(tipos, minlength=cfg.num_types)
            perda += 1.0 - res.fraction_for(fontes)
        else:
            z_copia = res.mean_fraction * (1.0 - res.extinction[tipos])
            perda += float(np.prod(1.0 - z_copia))
    return float(N * perda)


# ============================================
# OTIMIZAÇÃO DE BETA
# ============================================

def optimize_beta(cfg: ScenarioConfig, coding: Coding = Coding.ERASURE_CODED,
                  result: Optional[AnalyticResult] = None,
                  uncoded_model: str = "multi_source",
                  betas: Optional[Sequence[int]] = None) -> LoadCurve:
    """
    Avalia beta + Y para beta em 1..N (ou na lista dada) e devolve a curva.
    Com H = 1 a probabilidade por pacote é a constante z(1); com H > 1 cada
    pacote usa o tipo da sua posição na alocação e B é Poisson-binomial.
    """
    coding = Coding(coding)
    res = result if result is not None else analyze(cfg)
    N, M = cfg.total_nodes, cfg.message_count
    betas = list(betas) if betas is not None else list(range(1, N + 1))
    if not betas or min(betas) < 1 or max(betas) > N:
        raise CapacityError(f"betas devem estar em 1..{N}")

    entradas = []
    if coding is Coding.UNCODED:
        for b in betas:
            Y = complement_load_uncoded(cfg, uncoded_even_allocation(M, b), res, model=uncoded_model)
            entradas.append(LoadEntry(b, Y))
    elif cfg.num_types == 1:
        z1 = res.fraction_for([1])
        for b in betas:
            entradas.append(LoadEntry(b, complement_load_coded(cfg, b, z1)))
    else:
        # A alocação de beta é prefixo da de beta + 1: a distribuição de B é incremental
        probs = packet_spread_probabilities(cfg, max(betas), res)
        pesos = M - np.arange(M)
        alvo = set(betas)
        for b, dist in enumerate(_distribuicao_truncada(probs, M), start=1):
            if b in alvo:
                entradas.append(LoadEntry(b, float(N * pesos @ dist)))

    curva = LoadCurve(entries=tuple(entradas), coding=coding, baseline=float(N * M))
    b_otimo, total_otimo = curva.optimum
    log.info(f"[CARGA] {cfg.name} ({coding.value}): beta*={b_otimo} total*={total_otimo:.4f} "
             f"(sem cooperação: {curva.baseline:.0f})")
    return curva
