"""
Simulador de Contatos - Offload Engine
Monte Carlo orientado a eventos da fase de compartilhamento, com encontros
de Poisson por par de nós (tempos entre encontros exponenciais)
"""

import heapq
import logging
from multiprocessing import Pool
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import MODOS_SIMULACAO, threads_padrao
from modules.core_model import ConfigurationError, DomainError, ScenarioConfig, require_valid
from modules.loadopt import Coding, SourceAllocation
from modules.sharing import (
    BatchSummary,
    EpidemicState,
    MeetingEvent,
    PacketOutcome,
    SimOutcome,
    build_outcome,
    packet_sources,
    resolve_sources,
    sort_meetings,
    spread_out_classifier,
    summarize,
)

log = logging.getLogger(__name__)

__all__ = [
    "EpidemicState", "MeetingEvent", "PacketOutcome", "SimOutcome", "BatchSummary",
    "derive_seed", "run_replication", "run_batch", "spread_out_classifier",
    "sample_meeting_schedule", "run_on_schedule", "summarize",
]


def derive_seed(master: int, index: int) -> np.random.SeedSequence:
    """Semente da replicação `index`: igual ao filho `index` de SeedSequence(master).spawn"""
    return np.random.SeedSequence(int(master), spawn_key=(int(index),))


def _taxas_por_no(cfg: ScenarioConfig) -> np.ndarray:
    if cfg.contact_rates is None:
        raise ConfigurationError("contactsim exige contact_rates_hz (ou taxas estimadas pelo mobilitysim)",
                                 path="contact_rates_hz")
    tipos = cfg.node_types()
    return cfg.contact_rates.as_array()[np.ix_(tipos, tipos)]


# ============================================
# GERADOR PREGUIÇOSO DE ENCONTROS
# ============================================

class GeradorEncontros:
    """
    Encontros de Poisson por par, amostrados só enquanto um nó está infeccioso.
    pair_until[u, v] marca até onde o processo do par já foi sorteado; janelas
    sobrepostas reaproveitam os encontros já na fila (falta de memória).
    Pares com taxa infinita (enlace cabeado) se encontram no início de toda janela.
    """

    def __init__(self, taxas: np.ndarray, rng: np.random.Generator, horizonte: float):
        self.taxas = taxas
        self.rng = rng
        self.horizonte = horizonte
        n = taxas.shape[0]
        self.pair_until = np.zeros((n, n))
        self.fila: List[Tuple[float, int, int]] = []
        self._finitas = np.isfinite(taxas)

    def abrir_janela(self, u: int, inicio: float, fim: float):
        fim = min(fim, self.horizonte)
        if fim <= inicio:
            return
        taxa = self.taxas[u]
        comeco = np.maximum(self.pair_until[u], inicio)
        duracao = np.clip(fim - comeco, 0.0, None)
        duracao[u] = 0.0

        finitas = self._finitas[u] & (duracao > 0) & (taxa > 0)
        idx = np.flatnonzero(finitas)
        quantos = self.rng.poisson(taxa[idx] * duracao[idx])
        for v, k in zip(idx[quantos > 0], quantos[quantos > 0]):
            for t in comeco[v] + self.rng.random(k) * duracao[v]:
                heapq.heappush(self.fila, (float(t), min(u, v), max(u, v)))

        for v in np.flatnonzero(~self._finitas[u]):
            if v != u:
                heapq.heappush(self.fila, (float(inicio), min(u, v), max(u, v)))

        atualizar = finitas | ((duracao > 0) & (taxa == 0))
        self.pair_until[u, atualizar] = fim
        self.pair_until[atualizar, u] = fim

    def proximo(self) -> Optional[Tuple[float, int, int]]:
        return heapq.heappop(self.fila) if self.fila else None


def _propagar(estado: EpidemicState, gerador: GeradorEncontros, pacotes, fontes: Sequence[int]):
    tau = estado.active_period
    for no in sorted(set(int(n) for n in fontes)):
        gerador.abrir_janela(no, 0.0, tau[no])
    while True:
        evento = gerador.proximo()
        if evento is None:
            break
        t, a, b = evento
        for _, no in estado.meet(t, a, b, pacotes):
            gerador.abrir_janela(no, t, t + tau[no])


# ============================================
# REPLICAÇÕES
# ============================================

def run_replication(cfg: ScenarioConfig, sources=None, horizon: Optional[float] = None,
                    rng: Optional[np.random.Generator] = None, mode: Optional[str] = None,
                    coding: Optional[str] = None, threshold_fraction: Optional[float] = None,
                    replication: int = 0, seed: Tuple[int, int] = None,
                    keep_sets: bool = False) -> SimOutcome:
    """
    Uma replicação da fase de compartilhamento até o horizonte ou até não
    restar nó infeccioso. independent: um processo de encontros por pacote;
    shared: todos os pacotes sobre o mesmo processo.
    """
    sim = cfg.simulation
    mode = mode or sim.mode
    if mode not in MODOS_SIMULACAO:
        raise ConfigurationError(f"modo {mode!r} fora de {MODOS_SIMULACAO}", path="simulation.mode")
    coding = Coding(coding or sim.coding)
    threshold_fraction = threshold_fraction if threshold_fraction is not None else sim.threshold_fraction
    horizon = horizon if horizon is not None else sim.horizon
    horizonte = np.inf if horizon is None else float(horizon)
    if seed is None:
        seed = (cfg.rng_seed, replication)
    if rng is None:
        rng = np.random.default_rng(derive_seed(*seed))

    alocacao = resolve_sources(cfg, sources)
    fontes = packet_sources(cfg, alocacao, coding)
    estado = EpidemicState.start(cfg, fontes)
    taxas = _taxas_por_no(cfg)

    if mode == "shared":
        gerador = GeradorEncontros(taxas, rng, horizonte)
        _propagar(estado, gerador, None, np.concatenate(fontes))
    else:
        for j, nos in enumerate(fontes):
            gerador = GeradorEncontros(taxas, rng, horizonte)
            _propagar(estado, gerador, [j], nos)

    return build_outcome(estado, cfg, fontes, replication, seed, coding, threshold_fraction, keep_sets)


def _executar_replicacao(args) -> SimOutcome:
    cfg, alocacao, horizon, mode, coding, limiar, master, indice = args
    return run_replication(cfg, alocacao, horizon=horizon, mode=mode, coding=coding,
                           threshold_fraction=limiar, replication=indice, seed=(master, indice))


def _coletar(saidas: Iterable[SimOutcome], total: int) -> List[SimOutcome]:
    """Consome os resultados na ordem dos índices, registrando o progresso a cada 10%"""
    passo = max(1, total // 10)
    resultados = []
    for i, saida in enumerate(saidas, start=1):
        resultados.append(saida)
        if i % passo == 0:
            log.info(f"[CONTATO] {i}/{total} replicações")
    return resultados


def run_batch(cfg: ScenarioConfig, sources=None, replications: Optional[int] = None,
              seed: Optional[int] = None, mode: Optional[str] = None, horizon: Optional[float] = None,
              coding: Optional[str] = None, threshold_fraction: Optional[float] = None,
              workers: Optional[int] = None, runner=None) -> Tuple[List[SimOutcome], BatchSummary]:
    """
    Replicações independentes com sementes derivadas de (seed, índice).
    A ordem dos resultados segue o índice, com ou sem processos paralelos.
    """
    require_valid(cfg)
    replications = replications if replications is not None else cfg.simulation.replications
    if replications < 1:
        raise DomainError("replications deve ser >= 1")
    seed = cfg.rng_seed if seed is None else int(seed)
    workers = workers or threads_padrao()
    runner = runner or _executar_replicacao
    alocacao = resolve_sources(cfg, sources)

    tarefas = [(cfg, alocacao, horizon, mode, coding, threshold_fraction, seed, i) for i in range(replications)]
    log.info(f"[CONTATO] {cfg.name}: {replications} replicações, semente {seed}, "
             f"fontes {alocacao.per_type_counts}, {workers} processo(s)")

    if workers > 1 and replications > 1:
        with Pool(workers) as pool:
            resultados = _coletar(pool.imap(runner, tarefas, chunksize=max(1, replications // (4 * workers))),
                                  replications)
    else:
        resultados = _coletar(map(runner, tarefas), replications)

    resumo = summarize(resultados, cfg, seed)
    log.info(f"[CONTATO] espalhamento={np.array2string(resumo.spread_out_freq, precision=4)} "
             f"complemento médio={resumo.complement_mean:.2f}")
    return resultados, resumo


# ============================================
# AGENDA DETERMINÍSTICA DE ENCONTROS
# ============================================

def sample_meeting_schedule(cfg: ScenarioConfig, horizon: float,
                            rng: np.random.Generator) -> List[MeetingEvent]:
    """Todos os encontros de Poisson de todos os pares em [0, horizon), ordenados"""
    if not horizon > 0 or np.isinf(horizon):
        raise DomainError("horizon deve ser finito e > 0")
    taxas = _taxas_por_no(cfg)
    if not np.all(np.isfinite(taxas)):
        raise ConfigurationError("agenda materializada não admite taxas infinitas", path="contact_rates_hz")
    tipos = cfg.node_types()
    iu, iv = np.triu_indices(cfg.total_nodes, k=1)
    quantos = rng.poisson(taxas[iu, iv] * horizon)
    par = np.repeat(np.arange(iu.size), quantos)
    tempos = rng.random(par.size) * horizon
    eventos = [
        MeetingEvent(float(t), int(iu[p]), int(iv[p]), (int(tipos[iu[p]]) + 1, int(tipos[iv[p]]) + 1))
        for t, p in zip(tempos, par)
    ]
    return sort_meetings(eventos)


def run_on_schedule(cfg: ScenarioConfig, sources, meetings: Sequence[MeetingEvent],
                    horizon: Optional[float] = None, coding: Optional[str] = None,
                    threshold_fraction: Optional[float] = None,
                    replication: int = 0, seed: Tuple[int, int] = (0, 0)) -> SimOutcome:
    """SIR determinístico sobre uma lista dada de encontros (todos os pacotes no mesmo fluxo)"""
    coding = Coding(coding or cfg.simulation.coding)
    limiar = threshold_fraction if threshold_fraction is not None else cfg.simulation.threshold_fraction
    fontes = packet_sources(cfg, resolve_sources(cfg, sources), coding)
    estado = EpidemicState.start(cfg, fontes)
    for e in sort_meetings(meetings):
        if horizon is not None and e.time >= horizon:
            break
        estado.meet(e.time, e.u, e.v)
    return build_outcome(estado, cfg, fontes, replication, seed, coding, limiar, keep_sets=True)
