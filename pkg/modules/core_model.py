"""
Modelo de Cenário - Offload Engine
Tipos de nós, matriz de contatos, validação do cenário e probabilidade de encontro
"""

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import (
    AQUECIMENTO_PADRAO_S,
    CODIFICACOES,
    DURACAO_ESTIMATIVA_PADRAO_S,
    LIMIAR_ESPALHAMENTO,
    MODOS_SIMULACAO,
    REPLICACOES_PADRAO,
    TROCA_DIRECAO_MEDIA_S,
)

# ============================================
# EXCEÇÕES
# ============================================

class OffloadError(Exception):
    """Erro base do Offload Engine"""


class DomainError(OffloadError, ValueError):
    """Argumento numérico fora do domínio da operação"""


class ConfigurationError(OffloadError, ValueError):
    """Configuração inválida, ausente ou malformada"""

    def __init__(self, message: str, path: str = None, line: int = None,
                 column: int = None, valid_paths: Sequence[str] = None):
        super().__init__(message)
        self.path = path
        self.line = line
        self.column = column
        self.valid_paths = list(valid_paths or [])

    def __str__(self):
        msg = super().__str__()
        if self.path and self.line is not None:
            return f"{self.path}:{self.line}:{self.column}: {msg}"
        if self.path:
            return f"{self.path}: {msg}"
        return msg


class ConvergenceError(OffloadError, RuntimeError):
    """Solver esgotou o orçamento de iterações"""

    def __init__(self, message: str, last_iterate, residual: float):
        super().__init__(f"{message} (resíduo={residual:.3e})")
        self.last_iterate = np.asarray(last_iterate, dtype=float)
        self.residual = float(residual)


class CapacityError(OffloadError, ValueError):
    """Mais pacotes do que nós disponíveis"""


# ============================================
# ESTRUTURAS DE DADOS
# ============================================

@dataclass(frozen=True)
class NodeTypeSpec:
    """Tipo de nó h: quantidade, velocidade e período ativo"""
    id: int
    count: int
    speed: float = 0.0           # m/s (só mobilitysim)
    active_period: float = 0.0   # tau_h em segundos
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or f"tipo-{self.id}"


def _como_tupla(matriz) -> Optional[Tuple[Tuple, ...]]:
    if matriz is None:
        return None
    return tuple(tuple(linha) for linha in matriz)


@dataclass(frozen=True)
class ContactMatrix:
    """
    Taxas de encontro lambda_{h,k} (1/s).
    Quando estimada por mobilitysim, carrega amostras e intervalos de confiança.
    """
    rates: Tuple[Tuple[float, ...], ...]
    samples: Optional[Tuple[Tuple[int, ...], ...]] = None
    ci_low: Optional[Tuple[Tuple[float, ...], ...]] = None
    ci_high: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(tuple(float(v) for v in linha) for linha in self.rates))
        object.__setattr__(self, "samples", _como_tupla(self.samples))
        object.__setattr__(self, "ci_low", _como_tupla(self.ci_low))
        object.__setattr__(self, "ci_high", _como_tupla(self.ci_high))

    @property
    def size(self) -> int:
        return len(self.rates)

    def as_array(self) -> np.ndarray:
        return np.array(self.rates, dtype=float)

    @property
    def unestimated(self) -> np.ndarray:
        """Entradas sem nenhuma amostra (só faz sentido para matrizes estimadas)"""
        if self.samples is None:
            return np.zeros((self.size, self.size), dtype=bool)
        return np.array(self.samples) == 0

    def to_list(self) -> List[List[Any]]:
        """Linhas para JSON; infinito vira a string "inf" """
        return [["inf" if math.isinf(v) else v for v in linha] for linha in self.rates]


@dataclass(frozen=True)
class SourcesSpec:
    """Fontes da fase inicial: contagem por tipo ou beta total (alocação pela menor extinção)"""
    per_type: Optional[Tuple[int, ...]] = None
    beta: Optional[int] = None

    def __post_init__(self):
        if self.per_type is not None:
            object.__setattr__(self, "per_type", tuple(int(b) for b in self.per_type))


@dataclass(frozen=True)
class SimulationSettings:
    """Parâmetros das simulações de Monte Carlo"""
    replications: int = REPLICACOES_PADRAO
    threshold_fraction: float = LIMIAR_ESPALHAMENTO
    horizon: Optional[float] = None          # None = até o estado estacionário
    mode: str = "independent"
    time_step: Optional[float] = None        # None = min(0.1 s, r0 / (4 v_max))
    warmup: float = AQUECIMENTO_PADRAO_S
    estimation_duration: float = DURACAO_ESTIMATIVA_PADRAO_S
    coding: str = "erasure_coded"
    in_range_delivery: bool = False      # nó recém-infectado entrega aos suscetíveis já em alcance


@dataclass(frozen=True)
class ScenarioConfig:
    """Instância completa de uma rede heterogênea"""
    types: Tuple[NodeTypeSpec, ...]
    side_length: float
    radio_range: float
    message_count: int = 1
    contact_rates: Optional[ContactMatrix] = None
    rng_seed: int = 0
    direction_change_mean: float = TROCA_DIRECAO_MEDIA_S
    name: str = "cenario"
    sources: SourcesSpec = field(default_factory=SourcesSpec)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))

    # ---------- propriedades derivadas ----------

    @property
    def num_types(self) -> int:
        return len(self.types)

    @property
    def counts(self) -> np.ndarray:
        return np.array([t.count for t in self.types], dtype=int)

    @property
    def total_nodes(self) -> int:
        return int(sum(t.count for t in self.types))

    @property
    def active_periods(self) -> np.ndarray:
        return np.array([t.active_period for t in self.types], dtype=float)

    @property
    def speeds(self) -> np.ndarray:
        return np.array([t.speed for t in self.types], dtype=float)

    @property
    def density(self) -> float:
        """Nós por m²"""
        return self.total_nodes / self.side_length ** 2

    def node_types(self) -> np.ndarray:
        """Índice de tipo (base 0) de cada nó; nós numerados em blocos por tipo"""
        return np.repeat(np.arange(self.num_types), self.counts)

    def first_node_of_type(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.counts)[:-1])).astype(int)

    def with_rates(self, rates: ContactMatrix) -> "ScenarioConfig":
        return replace(self, contact_rates=rates)

    def with_value(self, path: str, value) -> "ScenarioConfig":
        """Copia o cenário trocando um campo numérico (caminho pontuado do JSON)"""
        dados = self.to_dict()
        set_path(dados, path, value)
        return ScenarioConfig.from_dict(dados)

    # ---------- serialização ----------

    def to_dict(self) -> dict:
        """Exporta para o esquema JSON documentado em GUIA_FORMATOS.md"""
        dados = {
            "name": self.name,
            "side_length_m": self.side_length,
            "radio_range_m": self.radio_range,
            "message_count": self.message_count,
            "rng_seed": self.rng_seed,
            "direction_change_mean_s": self.direction_change_mean,
            "types": [
                {
                    "id": t.id,
                    "name": t.name,
                    "count": t.count,
                    "speed_mps": t.speed,
                    "active_period_s": t.active_period,
                }
                for t in self.types
            ],
        }
        if self.contact_rates is not None:
            dados["contact_rates_hz"] = self.contact_rates.to_list()
        fontes = {}
        if self.sources.per_type is not None:
            fontes["per_type"] = list(self.sources.per_type)
        if self.sources.beta is not None:
            fontes["beta"] = self.sources.beta
        if fontes:
            dados["sources"] = fontes
        sim = self.simulation
        dados["simulation"] = {
            "replications": sim.replications,
            "threshold_fraction": sim.threshold_fraction,
            "horizon_s": sim.horizon,
            "mode": sim.mode,
            "time_step_s": sim.time_step,
            "warmup_s": sim.warmup,
            "estimation_duration_s": sim.estimation_duration,
            "coding": sim.coding,
            "in_range_delivery": sim.in_range_delivery,
        }
        return dados

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        """Importa do dicionário JSON; campos obrigatórios ausentes geram ConfigurationError"""
        if not isinstance(data, dict):
            raise ConfigurationError("o cenário deve ser um objeto JSON")
        tipos_raw = _exigir(data, "types", list)
        tipos = []
        for i, t in enumerate(tipos_raw):
            caminho = f"types.{i}"
            if not isinstance(t, dict):
                raise ConfigurationError("tipo de nó deve ser um objeto", path=caminho)
            tipos.append(NodeTypeSpec(
                id=_inteiro(t.get("id", i + 1), f"{caminho}.id"),
                count=_inteiro(_exigir(t, "count", None, caminho), f"{caminho}.count"),
                speed=_numero(t.get("speed_mps", 0.0), f"{caminho}.speed_mps"),
                active_period=_numero(t.get("active_period_s", 0.0), f"{caminho}.active_period_s"),
                name=str(t.get("name", "")),
            ))

        taxas = None
        if data.get("contact_rates_hz") is not None:
            linhas = data["contact_rates_hz"]
            if not isinstance(linhas, list) or not all(isinstance(l, list) for l in linhas):
                raise ConfigurationError("matriz deve ser lista de listas", path="contact_rates_hz")
            taxas = ContactMatrix(rates=[
                [_numero(v, f"contact_rates_hz.{h}.{k}") for k, v in enumerate(linha)]
                for h, linha in enumerate(linhas)
            ])

        fontes_raw = data.get("sources") or {}
        fontes = SourcesSpec(
            per_type=fontes_raw.get("per_type"),
            beta=_inteiro(fontes_raw["beta"], "sources.beta") if fontes_raw.get("beta") is not None else None,
        )

        sim_raw = data.get("simulation") or {}
        padrao = SimulationSettings()
        sim = SimulationSettings(
            replications=_inteiro(sim_raw.get("replications", padrao.replications), "simulation.replications"),
            threshold_fraction=_numero(sim_raw.get("threshold_fraction", padrao.threshold_fraction),
                                       "simulation.threshold_fraction"),
            horizon=_opcional(sim_raw.get("horizon_s"), "simulation.horizon_s"),
            mode=str(sim_raw.get("mode", padrao.mode)),
            time_step=_opcional(sim_raw.get("time_step_s"), "simulation.time_step_s"),
            warmup=_numero(sim_raw.get("warmup_s", padrao.warmup), "simulation.warmup_s"),
            estimation_duration=_numero(sim_raw.get("estimation_duration_s", padrao.estimation_duration),
                                        "simulation.estimation_duration_s"),
            coding=str(sim_raw.get("coding", padrao.coding)),
            in_range_delivery=_booleano(sim_raw.get("in_range_delivery", padrao.in_range_delivery),
                                        "simulation.in_range_delivery"),
        )

        return cls(
            types=tipos,
            side_length=_numero(_exigir(data, "side_length_m"), "side_length_m"),
            radio_range=_numero(_exigir(data, "radio_range_m"), "radio_range_m"),
            message_count=_inteiro(data.get("message_count", 1), "message_count"),
            contact_rates=taxas,
            rng_seed=_inteiro(data.get("rng_seed", 0), "rng_seed"),
            direction_change_mean=_numero(data.get("direction_change_mean_s", TROCA_DIRECAO_MEDIA_S),
                                          "direction_change_mean_s"),
            name=str(data.get("name", "cenario")),
            sources=fontes,
            simulation=sim,
        )


# ============================================
# FUNÇÕES AUXILIARES DE PARSE
# ============================================

def _exigir(data: dict, chave: str, tipo=None, prefixo: str = ""):
    caminho = f"{prefixo}.{chave}" if prefixo else chave
    if chave not in data:
        raise ConfigurationError("campo obrigatório ausente", path=caminho)
    valor = data[chave]
    if tipo is not None and not isinstance(valor, tipo):
        raise ConfigurationError(f"esperado {tipo.__name__}", path=caminho)
    return valor


def _numero(valor, caminho: str) -> float:
    if isinstance(valor, str) and valor.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if isinstance(valor, bool) or not isinstance(valor, (int, float)):
        raise ConfigurationError(f"valor numérico esperado, recebido {valor!r}", path=caminho)
    return float(valor)


def _opcional(valor, caminho: str) -> Optional[float]:
    return None if valor is None else _numero(valor, caminho)


def _booleano(valor, caminho: str) -> bool:
    if not isinstance(valor, bool):
        raise ConfigurationError(f"true/false esperado, recebido {valor!r}", path=caminho)
    return valor


def _inteiro(valor, caminho: str) -> int:
    numero = _numero(valor, caminho)
    if not math.isfinite(numero) or numero != int(numero):
        raise ConfigurationError(f"inteiro esperado, recebido {valor!r}", path=caminho)
    return int(numero)


def numeric_paths(data, prefixo: str = "") -> List[str]:
    """Lista os caminhos pontuados de todos os campos numéricos de um dicionário de cenário"""
    caminhos = []
    if isinstance(data, dict):
        itens = data.items()
    elif isinstance(data, list):
        itens = enumerate(data)
    else:
        return caminhos
    for chave, valor in itens:
        caminho = f"{prefixo}.{chave}" if prefixo else str(chave)
        if isinstance(valor, (dict, list)):
            caminhos.extend(numeric_paths(valor, caminho))
        elif isinstance(valor, (int, float)) and not isinstance(valor, bool):
            caminhos.append(caminho)
        elif isinstance(valor, str) and valor.lower() in ("inf", "infinity"):
            caminhos.append(caminho)
    return caminhos


# Campos opcionais que podem ser endereçados mesmo quando ausentes no JSON
CAMINHOS_OPCIONAIS = ("sources.beta", "simulation.horizon_s", "simulation.time_step_s")


def set_path(data: dict, path: str, value) -> None:
    """Atribui um valor por caminho pontuado (índices de lista como inteiros)"""
    validos = numeric_paths(data)
    if path not in validos and path not in CAMINHOS_OPCIONAIS:
        raise ConfigurationError(f"caminho desconhecido: {path}", path=path,
                                 valid_paths=validos + list(CAMINHOS_OPCIONAIS))
    partes = path.split(".")
    alvo = data
    for parte in partes[:-1]:
        if isinstance(alvo, list):
            alvo = alvo[int(parte)]
        else:
            if alvo.get(parte) is None:
                alvo[parte] = {}
            alvo = alvo[parte]
    ultima = partes[-1]
    if isinstance(alvo, list):
        alvo[int(ultima)] = value
    else:
        alvo[ultima] = value
    if path == "sources.beta":
        data["sources"].pop("per_type", None)


# ============================================
# VALIDAÇÃO
# ============================================

@dataclass(frozen=True)
class ValidationFailure:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    """Resultado da validação: ok ou lista de invariantes violadas"""
    failures: List[ValidationFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def add(self, path: str, message: str):
        self.failures.append(ValidationFailure(path, message))

    def messages(self) -> List[str]:
        return [str(f) for f in self.failures]

    def __bool__(self):
        return self.ok


def validate_scenario(cfg: ScenarioConfig) -> ValidationReport:
    """
    Verifica todas as invariantes do cenário sem alterá-lo.
    Nunca levanta exceção: as falhas vêm no relatório, com o caminho do campo.
    """
    rel = ValidationReport()

    if cfg.num_types < 1:
        rel.add("types", "H >= 1")
    for i, t in enumerate(cfg.types):
        if t.id != i + 1:
            rel.add(f"types.{i}.id", "ids dos tipos devem ser 1..H em ordem")
        if t.count < 1:
            rel.add(f"types.{i}.count", "count >= 1")
        if not t.active_period >= 0:
            rel.add(f"types.{i}.active_period_s", "active_period >= 0")
        if not (t.speed >= 0 and math.isfinite(t.speed)):
            rel.add(f"types.{i}.speed_mps", "speed >= 0")
    if cfg.total_nodes < 1:
        rel.add("types", "N >= 1")

    if not (cfg.side_length > 0 and math.isfinite(cfg.side_length)):
        rel.add("side_length_m", "side_length > 0")
    if not cfg.radio_range > 0:
        rel.add("radio_range_m", "radio_range > 0")
    elif cfg.side_length > 0 and cfg.radio_range >= cfg.side_length / 2:
        rel.add("radio_range_m", "radio_range ≥ L/2")

    if cfg.message_count < 1:
        rel.add("message_count", "M >= 1")
    if cfg.rng_seed < 0:
        rel.add("rng_seed", "rng_seed >= 0")
    if not cfg.direction_change_mean > 0:
        rel.add("direction_change_mean_s", "direction_change_mean > 0")

    if cfg.contact_rates is not None:
        taxas = cfg.contact_rates.rates
        H = cfg.num_types
        if len(taxas) != H or any(len(linha) != H for linha in taxas):
            rel.add("contact_rates_hz", f"matriz deve ser {H}x{H}")
        else:
            for h in range(H):
                for k in range(H):
                    v = taxas[h][k]
                    if math.isnan(v) or v < 0:
                        rel.add(f"contact_rates_hz.{h}.{k}", "rate >= 0")
                    elif k > h and v != taxas[k][h]:
                        rel.add(f"contact_rates_hz.{h}.{k}", "rates[h][k] = rates[k][h]")

    fontes = cfg.sources
    if fontes.per_type is not None:
        if len(fontes.per_type) != cfg.num_types:
            rel.add("sources.per_type", "um valor por tipo")
        else:
            for i, (b, t) in enumerate(zip(fontes.per_type, cfg.types)):
                if b < 0 or b > t.count:
                    rel.add(f"sources.per_type.{i}", "0 <= beta_h <= N_h")
            if sum(fontes.per_type) < 1:
                rel.add("sources.per_type", "sum beta_h >= 1")
    if fontes.beta is not None and not 1 <= fontes.beta <= cfg.total_nodes:
        rel.add("sources.beta", "1 <= beta <= N")

    sim = cfg.simulation
    if sim.replications < 1:
        rel.add("simulation.replications", "replications >= 1")
    if not 0 < sim.threshold_fraction < 1:
        rel.add("simulation.threshold_fraction", "threshold_fraction in (0,1)")
    if sim.mode not in MODOS_SIMULACAO:
        rel.add("simulation.mode", f"mode in {MODOS_SIMULACAO}")
    if sim.coding not in CODIFICACOES:
        rel.add("simulation.coding", f"coding in {CODIFICACOES}")
    if sim.horizon is not None and not sim.horizon > 0:
        rel.add("simulation.horizon_s", "horizon > 0")
    if sim.time_step is not None and not sim.time_step > 0:
        rel.add("simulation.time_step_s", "time_step > 0")

    return rel


def require_valid(cfg: ScenarioConfig) -> ScenarioConfig:
    """Levanta ConfigurationError com todas as falhas, se houver"""
    rel = validate_scenario(cfg)
    if not rel.ok:
        raise ConfigurationError("cenário inválido: " + "; ".join(rel.messages()))
    return cfg


# ============================================
# PROBABILIDADE DE ENCONTRO
# ============================================

def meeting_probability(rate: float, active_period: float) -> float:
    """
    gamma = 1 - exp(-rate * tau): probabilidade de o nó transmissor encontrar
    um nó do outro tipo durante seu período ativo. Taxa infinita (enlace cabeado)
    vale 1.0 exatamente, desde que o período ativo seja positivo.
    """
    if math.isnan(rate) or math.isnan(active_period):
        raise DomainError("rate e active_period não podem ser NaN")
    if rate < 0 or active_period < 0:
        raise DomainError(f"rate={rate} e active_period={active_period} devem ser >= 0")
    if rate == 0 or active_period == 0:
        return 0.0
    if math.isinf(rate) or math.isinf(active_period):
        return 1.0
    return -math.expm1(-rate * active_period)


def gamma_matrix(cfg: ScenarioConfig) -> np.ndarray:
    """gamma[h][k] = meeting_probability(rates[h][k], tau_h); em geral assimétrica"""
    if cfg.contact_rates is None:
        raise ConfigurationError("contact_rates ausente: informe contact_rates_hz ou estime via mobilitysim",
                                 path="contact_rates_hz")
    taxas = cfg.contact_rates.rates
    H = cfg.num_types
    if len(taxas) != H or any(len(linha) != H for linha in taxas):
        raise ConfigurationError(f"matriz de taxas deve ser {H}x{H}", path="contact_rates_hz")
    gamma = np.zeros((H, H))
    for h, tipo in enumerate(cfg.types):
        for k in range(H):
            gamma[h, k] = meeting_probability(taxas[h][k], tipo.active_period)
    return gamma
