"""
Simulador Espacial - Offload Engine
Toro (0, L]^2 com mobilidade de direção aleatória, encontros por disco unitário,
estimativa das taxas de encontro e epidemia SIR sobre os encontros detectados
"""

import copy
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import chi2, kstest

from config import MODOS_SIMULACAO, NIVEL_CONFIANCA, PASSO_MAXIMO_S
from modules.contactsim import derive_seed, run_batch
from modules.core_model import (
    ConfigurationError,
    ContactMatrix,
    DomainError,
    ScenarioConfig,
    require_valid,
)
from modules.loadopt import Coding
from modules.sharing import (
    BatchSummary,
    EpidemicState,
    MeetingEvent,
    SimOutcome,
    build_outcome,
    packet_sources,
    resolve_sources,
)

log = logging.getLogger(__name__)


# ============================================
# ESTRUTURAS DE DADOS
# ============================================

@dataclass(frozen=True)
class NodeKinematics:
    """Posição em (0, L]^2, direção (rad) e velocidade (m/s) de um nó"""
    position: Tuple[float, float]
    heading: float
    speed: float


@dataclass
class MobilityState:
    """Estado cinemático de todos os nós, pares em alcance e relógio"""
    positions: np.ndarray
    headings: np.ndarray
    speeds: np.ndarray
    next_turn: np.ndarray
    node_types: np.ndarray
    side_length: float
    radio_range: float
    direction_change_mean: float
    rng: np.random.Generator = field(repr=False)
    clock: float = 0.0
    in_range: Optional[np.ndarray] = None   # chaves i*N + j (i < j); None antes da primeira detecção

    @property
    def num_nodes(self) -> int:
        return self.positions.shape[0]

    def node(self, i: int) -> NodeKinematics:
        return NodeKinematics((float(self.positions[i, 0]), float(self.positions[i, 1])),
                              float(self.headings[i]), float(self.speeds[i]))


def wrap(x, L: float):
    """Leva coordenadas para (0, L]"""
    return L - np.mod(L - x, L)


def toroidal_distance(p, q, L: float):
    """Distância euclidiana com a convenção da imagem mínima"""
    d = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    d = np.minimum(d, L - d)
    return np.hypot(d[..., 0], d[..., 1])


def default_time_step(cfg: ScenarioConfig) -> float:
    """dt = min(0.1 s, r0 / (4 v_max)), salvo se o cenário fixar time_step_s"""
    if cfg.simulation.time_step is not None:
        return cfg.simulation.time_step
    v_max = float(cfg.speeds.max()) if cfg.num_types else 0.0
    if v_max <= 0:
        return PASSO_MAXIMO_S
    return min(PASSO_MAXIMO_S, cfg.radio_range / (4.0 * v_max))


# ============================================
# MOBILIDADE
# ============================================

def init_mobility(cfg: ScenarioConfig, rng: np.random.Generator) -> MobilityState:
    """Posições uniformes no toro e direções uniformes (já estacionário)"""
    N, L = cfg.total_nodes, cfg.side_length
    tipos = cfg.node_types()
    velocidades = cfg.speeds[tipos]
    posicoes = L - rng.random((N, 2)) * L
    direcoes = rng.uniform(0.0, 2.0 * math.pi, N)
    troca = rng.exponential(cfg.direction_change_mean, N)
    troca[velocidades == 0] = np.inf
    return MobilityState(
        positions=posicoes, headings=direcoes, speeds=velocidades, next_turn=troca,
        node_types=tipos, side_length=L, radio_range=cfg.radio_range,
        direction_change_mean=cfg.direction_change_mean, rng=rng,
    )


def step_mobility(state: MobilityState, dt: float) -> MobilityState:
    """
    Avança dt segundos em linha reta; nós cuja época de troca cai dentro do
    passo andam até ela, sorteiam nova direção e seguem com o tempo restante.
    """
    if not dt > 0:
        raise DomainError(f"dt deve ser > 0, recebido {dt!r}")
    fim = state.clock + dt
    agora = np.full(state.num_nodes, state.clock)
    while True:
        trocam = np.flatnonzero(state.next_turn < fim)
        if trocam.size == 0:
            break
        tempo = state.next_turn[trocam] - agora[trocam]
        _mover(state, trocam, tempo)
        agora[trocam] = state.next_turn[trocam]
        state.headings[trocam] = state.rng.uniform(0.0, 2.0 * math.pi, trocam.size)
        state.next_turn[trocam] += state.rng.exponential(state.direction_change_mean, trocam.size)

    todos = np.arange(state.num_nodes)
    _mover(state, todos, fim - agora)
    state.positions = wrap(state.positions, state.side_length)
    state.clock = fim
    return state


def _mover(state: MobilityState, nos: np.ndarray, tempo: np.ndarray):
    passo = state.speeds[nos] * tempo
    state.positions[nos, 0] += passo * np.cos(state.headings[nos])
    state.positions[nos, 1] += passo * np.sin(state.headings[nos])


def detect_meetings(state: MobilityState, dt: float) -> List[MeetingEvent]:
    """
    Pares que entraram no alcance desde a última detecção, com o tempo do
    relógio atual, em ordem de id do par. Na primeira chamada todo par já em
    alcance conta como encontro.
    """
    v_max = float(state.speeds.max()) if state.num_nodes else 0.0
    if v_max > 0 and not dt < state.radio_range / (2.0 * v_max):
        raise ConfigurationError(
            f"dt={dt} grande demais: exige dt < r0/(2 v_max) = {state.radio_range / (2.0 * v_max):.4g}",
            path="simulation.time_step_s",
        )
    N, L = state.num_nodes, state.side_length
    arvore = cKDTree(np.mod(state.positions, L), boxsize=L)
    pares = arvore.query_pairs(state.radio_range, output_type="ndarray")
    chaves = np.unique(pares[:, 0].astype(np.int64) * N + pares[:, 1]) if len(pares) else np.empty(0, np.int64)

    anteriores = state.in_range if state.in_range is not None else np.empty(0, np.int64)
    entradas = np.setdiff1d(chaves, anteriores, assume_unique=True)
    state.in_range = chaves

    tipos = state.node_types
    eventos = []
    for chave in entradas:
        u, v = divmod(int(chave), N)
        eventos.append(MeetingEvent(state.clock, u, v, (int(tipos[u]) + 1, int(tipos[v]) + 1)))
    return eventos


def advance(state: MobilityState, dt: float) -> Tuple[MobilityState, List[MeetingEvent]]:
    step_mobility(state, dt)
    return state, detect_meetings(state, dt)


# ============================================
# ESTIMATIVA DAS TAXAS DE ENCONTRO
# ============================================

@dataclass(frozen=True)
class RateEstimate:
    """Taxas estimadas e as amostras de intervalos entre encontros por par de tipos"""
    matrix: ContactMatrix
    gaps: Dict[Tuple[int, int], np.ndarray] = field(repr=False)
    gap_starts: Dict[Tuple[int, int], np.ndarray] = field(repr=False)
    duration: float = 0.0

    def rate(self, h: int, k: int) -> float:
        """Taxa do par de tipos (ids base 1)"""
        return self.matrix.rates[h - 1][k - 1]


def _pares_por_tipo(counts: np.ndarray, h: int, k: int) -> int:
    if h == k:
        return int(counts[h] * (counts[h] - 1) // 2)
    return int(counts[h] * counts[k])


def poisson_rate_interval(eventos: int, exposicao: float, nivel: float = NIVEL_CONFIANCA) -> Tuple[float, float]:
    """Intervalo exato (qui-quadrado) para a taxa de um processo de Poisson"""
    alfa = 1.0 - nivel
    baixo = 0.0 if eventos == 0 else chi2.ppf(alfa / 2, 2 * eventos) / 2.0
    alto = chi2.ppf(1 - alfa / 2, 2 * eventos + 2) / 2.0
    return float(baixo / exposicao), float(alto / exposicao)


def measure_meetings(cfg: ScenarioConfig, warmup: Optional[float] = None, duration: Optional[float] = None,
                     rng: Optional[np.random.Generator] = None, dt: Optional[float] = None) -> RateEstimate:
    """
    Só mobilidade: conta encontros por par de tipos depois do aquecimento.
    lambda = #encontros / (#pares * duração), o MLE exponencial com censura;
    par de tipos sem encontro fica com amostra zero (não estimado).
    """
    require_valid(cfg)
    warmup = cfg.simulation.warmup if warmup is None else warmup
    duration = cfg.simulation.estimation_duration if duration is None else duration
    if not duration > 0 or warmup < 0:
        raise DomainError("duration > 0 e warmup >= 0")
    dt = dt or default_time_step(cfg)
    rng = rng if rng is not None else np.random.default_rng(np.random.SeedSequence(cfg.rng_seed))
    H, N = cfg.num_types, cfg.total_nodes

    estado = init_mobility(cfg, rng)
    for _ in range(int(round(warmup / dt))):
        step_mobility(estado, dt)
    detect_meetings(estado, dt)
    inicio = estado.clock

    contagem = np.zeros((H, H), dtype=np.int64)
    ultimo = {}
    gaps = {(h, k): [] for h in range(1, H + 1) for k in range(h, H + 1)}
    inicios = {(h, k): [] for h in range(1, H + 1) for k in range(h, H + 1)}
    passos = int(round(duration / dt))
    log.info(f"[MOBILIDADE] {cfg.name}: estimando taxas em {passos} passos de {dt:.4g} s")
    for _ in range(passos):
        _, eventos = advance(estado, dt)
        for e in eventos:
            h, k = sorted(e.type_pair)
            contagem[h - 1, k - 1] += 1
            par = e.u * N + e.v
            if par in ultimo:
                gaps[(h, k)].append(e.time - ultimo[par])
                inicios[(h, k)].append(ultimo[par] - inicio)
            ultimo[par] = e.time
    duracao_real = estado.clock - inicio

    taxas = np.zeros((H, H))
    amostras = np.zeros((H, H), dtype=np.int64)
    baixo = np.zeros((H, H))
    alto = np.zeros((H, H))
    for h in range(H):
        for k in range(h, H):
            pares = _pares_por_tipo(cfg.counts, h, k)
            n = int(contagem[h, k])
            exposicao = pares * duracao_real
            if pares > 0:
                taxas[h, k] = n / exposicao
                baixo[h, k], alto[h, k] = poisson_rate_interval(n, exposicao)
            else:
                alto[h, k] = np.inf
            amostras[h, k] = n
            taxas[k, h], amostras[k, h] = taxas[h, k], amostras[h, k]
            baixo[k, h], alto[k, h] = baixo[h, k], alto[h, k]
            if n == 0:
                log.warning(f"[MOBILIDADE] Par de tipos ({h + 1},{k + 1}) sem encontros: taxa não estimada")

    matriz = ContactMatrix(rates=taxas, samples=amostras, ci_low=baixo, ci_high=alto)
    return RateEstimate(
        matrix=matriz,
        gaps={p: np.array(v) for p, v in gaps.items()},
        gap_starts={p: np.array(v) for p, v in inicios.items()},
        duration=duracao_real,
    )


def estimate_rates(cfg: ScenarioConfig, warmup: Optional[float] = None, duration: Optional[float] = None,
                   rng: Optional[np.random.Generator] = None, dt: Optional[float] = None) -> ContactMatrix:
    return measure_meetings(cfg, warmup, duration, rng, dt).matrix


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    samples: int
    rejected: bool


def intermeeting_ks_test(estimate: RateEstimate, pair: Tuple[int, int], alpha: float = 0.01,
                         cutoff: Optional[float] = None) -> KSResult:
    """
    Kolmogorov-Smirnov dos intervalos entre encontros contra Exp(lambda).
    Só entram intervalos iniciados em [0, T - c] e com duração <= c, que são
    observados por completo; a referência é a exponencial truncada em c.
    """
    h, k = sorted(pair)
    taxa = estimate.rate(h, k)
    if not taxa > 0:
        raise DomainError(f"par ({h},{k}) sem taxa estimada")
    c = cutoff if cutoff is not None else estimate.duration / 4.0
    gaps = estimate.gaps[(h, k)]
    inicios = estimate.gap_starts[(h, k)]
    amostra = gaps[(inicios <= estimate.duration - c) & (gaps <= c)]
    if amostra.size == 0:
        raise DomainError(f"par ({h},{k}) sem intervalos completos")
    massa = -math.expm1(-taxa * c)
    resultado = kstest(amostra, lambda x: -np.expm1(-taxa * np.asarray(x)) / massa)
    return KSResult(float(resultado.statistic), float(resultado.pvalue), int(amostra.size),
                    bool(resultado.pvalue < alpha))


# ============================================
# EPIDEMIA ESPACIAL
# ============================================

def _vizinhos(mobilidade: MobilityState, no: int) -> np.ndarray:
    """Nós em alcance de no segundo a última detecção, em ordem crescente"""
    if mobilidade.in_range is None:
        return np.empty(0, dtype=np.int64)
    u, v = np.divmod(mobilidade.in_range, mobilidade.num_nodes)
    return np.sort(np.concatenate([v[u == no], u[v == no]]))


def _espalhar(estado: EpidemicState, mobilidade: MobilityState, dt: float,
              horizonte: float, pacotes, em_alcance: bool = False):
    """
    SIR sobre os encontros detectados até todos os nós infectados recuperarem.
    Com em_alcance, um nó infectado em t entrega em t aos suscetíveis que já
    estão no seu alcance, como a fonte faz no primeiro instante.
    """
    tau = estado.active_period
    recebidos = estado.received() if pacotes is None else estado.received()[pacotes]
    nos_ativos = np.flatnonzero(recebidos.any(axis=0))
    ate = float(np.max(tau[nos_ativos])) if nos_ativos.size else 0.0

    def aplicar(eventos):
        nonlocal ate
        for e in eventos:
            fila = deque(estado.meet(e.time, e.u, e.v, pacotes))
            while fila:
                _, no = fila.popleft()
                ate = max(ate, e.time + tau[no])
                if em_alcance:
                    for viz in _vizinhos(mobilidade, no):
                        fila.extend(estado.meet(e.time, no, int(viz), pacotes))

    aplicar(detect_meetings(mobilidade, dt))
    while mobilidade.clock < min(ate, horizonte):
        passo = min(dt, horizonte - mobilidade.clock)
        _, eventos = advance(mobilidade, passo)
        aplicar(eventos)


def run_spatial_epidemic(cfg: ScenarioConfig, sources=None, horizon: Optional[float] = None,
                         rng: Optional[np.random.Generator] = None, mode: Optional[str] = None,
                         coding: Optional[str] = None, threshold_fraction: Optional[float] = None,
                         replication: int = 0, seed: Tuple[int, int] = None,
                         keep_sets: bool = False,
                         mobility: Optional[MobilityState] = None) -> SimOutcome:
    """
    Posicionamento uniforme, mobilidade, detecção de encontros e SIR com as
    mesmas regras do simulador de contatos. shared: uma realização de
    mobilidade carrega todos os pacotes; independent: uma por pacote.

    mobility fixa o estado inicial dos nós em vez de sorteá-lo; no modo
    independent cada pacote parte de uma cópia desse mesmo estado.
    """
    sim = cfg.simulation
    mode = mode or sim.mode
    if mode not in MODOS_SIMULACAO:
        raise ConfigurationError(f"modo {mode!r} fora de {MODOS_SIMULACAO}", path="simulation.mode")
    coding = Coding(coding or sim.coding)
    limiar = threshold_fraction if threshold_fraction is not None else sim.threshold_fraction
    horizon = horizon if horizon is not None else sim.horizon
    horizonte = math.inf if horizon is None else float(horizon)
    if math.isinf(horizonte) and np.any(np.isinf(cfg.active_periods)):
        raise ConfigurationError("período ativo infinito exige horizon_s finito", path="simulation.horizon_s")
    if mobility is not None and mobility.num_nodes != cfg.total_nodes:
        raise DomainError(f"estado de mobilidade com {mobility.num_nodes} nós, cenário tem {cfg.total_nodes}")
    if seed is None:
        seed = (cfg.rng_seed, replication)
    if rng is None:
        rng = np.random.default_rng(derive_seed(*seed))
    dt = default_time_step(cfg)

    def mobilidade_inicial() -> MobilityState:
        if mobility is None:
            return init_mobility(cfg, rng)
        return mobility if mode == "shared" else copy.deepcopy(mobility)

    fontes = packet_sources(cfg, resolve_sources(cfg, sources), coding)
    estado = EpidemicState.start(cfg, fontes)
    if mode == "shared":
        _espalhar(estado, mobilidade_inicial(), dt, horizonte, None, sim.in_range_delivery)
    else:
        for j in range(len(fontes)):
            _espalhar(estado, mobilidade_inicial(), dt, horizonte, [j], sim.in_range_delivery)
    return build_outcome(estado, cfg, fontes, replication, seed, coding, limiar, keep_sets)


def _executar_replicacao_espacial(args) -> SimOutcome:
    cfg, alocacao, horizon, mode, coding, limiar, master, indice = args
    return run_spatial_epidemic(cfg, alocacao, horizon=horizon, mode=mode, coding=coding,
                                threshold_fraction=limiar, replication=indice, seed=(master, indice))


def run_spatial_batch(cfg: ScenarioConfig, sources=None, replications: Optional[int] = None,
                      seed: Optional[int] = None, mode: Optional[str] = None,
                      horizon: Optional[float] = None, coding: Optional[str] = None,
                      threshold_fraction: Optional[float] = None,
                      workers: Optional[int] = None) -> Tuple[List[SimOutcome], BatchSummary]:
    """Lote de epidemias espaciais, com as mesmas sementes e ordem do simulador de contatos"""
    return run_batch(cfg, sources, replications=replications, seed=seed, mode=mode,
                     horizon=horizon, coding=coding, threshold_fraction=threshold_fraction,
                     workers=workers, runner=_executar_replicacao_espacial)
