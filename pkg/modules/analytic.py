"""
Motor Analítico - Offload Engine
Processo de ramificação multi-tipo: limiar (raio espectral), probabilidades de
extinção e frações esperadas de receptores
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from config import (
    MAX_ITERACOES,
    MAX_ITERACOES_ESPECTRAL,
    MAX_ITERACOES_LAMBERT,
    MAX_PASSOS_NEWTON,
    PASSOS_POLIMENTO,
    RAMIFICACAO_GERACOES_MAX,
    RAMIFICACAO_POPULACAO_MAX,
    TOL_CRITICIDADE,
    TOL_ESPECTRAL,
    TOL_ITERACAO,
)
from modules.core_model import (
    ConvergenceError,
    DomainError,
    ScenarioConfig,
    gamma_matrix,
)

log = logging.getLogger(__name__)

RAMO = -1.0 / math.e
TOL_RAMO = 1e-15


# ============================================
# ESTRUTURAS DE DADOS
# ============================================

@dataclass(frozen=True)
class MeanOffspringMatrix:
    """Número médio de filhos: entries[h, k] = N_k * gamma[h, k]"""
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _como_matriz(self.entries))

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class AnalyticResult:
    """Resultado completo do motor analítico para um cenário"""
    spectral_radius: float
    extinction: np.ndarray
    fractions: np.ndarray
    supercritical: bool
    extinction_residual: float = 0.0
    fraction_residual: float = 0.0
    counts: np.ndarray = field(default=None, repr=False)

    @property
    def mean_fraction(self) -> float:
        """Fração de receptores ponderada pela população, sum_h N_h z_h / N"""
        if self.counts is None:
            return float(np.mean(self.fractions))
        return float(self.counts @ self.fractions / self.counts.sum())

    def fraction_for(self, sources: Sequence[int]) -> float:
        """z(beta_1..beta_H) com os vetores já resolvidos"""
        return self.mean_fraction * (1.0 - extinction_multi_source(self.extinction, sources))

    def to_dict(self) -> dict:
        return {
            "spectral_radius": self.spectral_radius,
            "supercritical": self.supercritical,
            "extinction": self.extinction.tolist(),
            "fractions": self.fractions.tolist(),
            "extinction_residual": self.extinction_residual,
            "fraction_residual": self.fraction_residual,
        }


# ============================================
# MATRIZES DO CENÁRIO
# ============================================

def _como_matriz(m) -> np.ndarray:
    """Converte para matriz quadrada float, rejeitando entradas negativas ou não finitas"""
    if isinstance(m, MeanOffspringMatrix):
        return m.entries
    arr = np.array(m, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise DomainError(f"matriz quadrada não vazia esperada, shape={arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("matriz com entradas não finitas")
    if np.any(arr < 0):
        raise DomainError("matriz com entradas negativas")
    arr.setflags(write=False)
    return arr


def mean_offspring_matrix(cfg: ScenarioConfig) -> MeanOffspringMatrix:
    """Matriz do limiar: N_k * gamma[h, k]"""
    return MeanOffspringMatrix(gamma_matrix(cfg) * cfg.counts[None, :])


def fraction_weight_matrix(cfg: ScenarioConfig) -> np.ndarray:
    """Pesos da equação das frações, com o índice transposto: A[h, k] = N_k * gamma[k, h]"""
    return gamma_matrix(cfg).T * cfg.counts[None, :]


# ============================================
# FUNÇÃO W DE LAMBERT (RAMO PRINCIPAL)
# ============================================

def lambert_w0(x: float) -> float:
    """
    Ramo principal de W(x), solução de w * exp(w) = x com w >= -1.
    Iteração de Halley; semente pela série do ponto de ramificação perto de -1/e.
    """
    x = float(x)
    if math.isnan(x):
        raise DomainError("lambert_w0 indefinida para NaN")
    if x < RAMO:
        if x < RAMO - TOL_RAMO:
            raise DomainError(f"lambert_w0 exige x >= -1/e, recebido {x!r}")
        x = RAMO
    if x == RAMO:
        return -1.0
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf

    if x < -0.25:
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif x < 3.0:
        w = math.log1p(x)
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1

    for _ in range(MAX_ITERACOES_LAMBERT):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 <= 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w = max(w - dw, -1.0)
        if abs(dw) <= 4e-16 * (1.0 + abs(w)):
            break
    return w


# ============================================
# RAIO ESPECTRAL
# ============================================

def spectral_radius(m) -> float:
    """
    Autovalor dominante (Perron) de uma matriz não negativa.
    Iteração da potência sobre A + I: o deslocamento torna o autovalor de Perron
    estritamente dominante mesmo para matrizes periódicas.
    """
    A = _como_matriz(m)
    H = A.shape[0]
    if H == 1:
        return float(A[0, 0])
    if not A.any():
        return 0.0

    B = A + np.eye(H)
    x = np.ones(H)
    for it in range(1, MAX_ITERACOES_ESPECTRAL + 1):
        y = B @ x
        y /= y.max()
        delta = np.max(np.abs(y - x))
        x = y
        if delta < TOL_ESPECTRAL:
            i = int(np.argmax(x))
            # Quociente em A (não em B) para não perder precisão no deslocamento
            raio = float((A @ x)[i] / x[i])
            log.debug(f"[ANALITICO] Raio espectral {raio:.12g} em {it} iterações")
            return raio

    raio = float(np.max(np.abs(np.linalg.eigvals(A))))
    log.warning(f"[ANALITICO] Iteração da potência não convergiu; usando autovalores densos ({raio:.12g})")
    return raio


def _subcritico(raio: float) -> bool:
    return raio <= 1.0 + TOL_CRITICIDADE


# ============================================
# SOLVERS DE PONTO FIXO
# ============================================

def _residuo_extincao(M: np.ndarray, w: np.ndarray) -> float:
    return float(np.max(np.abs(w - np.exp(M @ (w - 1.0)))))


def _residuo_fracoes(A: np.ndarray, z: np.ndarray) -> float:
    return float(np.max(np.abs(z + np.expm1(-(A @ z)))))


def _newton(F, J, x0: np.ndarray, passos: int, amortecer: bool) -> np.ndarray:
    """
    Newton sobre o resíduo F, mantendo o iterado em [0,1]^H.
    Com amortecimento, o passo é reduzido à metade até o resíduo cair.
    Sem amortecimento (polimento), um passo que não reduz o resíduo encerra.
    """
    x = x0.copy()
    r = np.max(np.abs(F(x)))
    for _ in range(passos):
        if r == 0.0:
            break
        try:
            passo = np.linalg.solve(J(x), -F(x))
        except np.linalg.LinAlgError:
            break
        t = 1.0
        melhorou = False
        for _ in range(30 if amortecer else 1):
            candidato = np.clip(x + t * passo, 0.0, 1.0)
            r_novo = np.max(np.abs(F(candidato)))
            if r_novo < r:
                x, r = candidato, r_novo
                melhorou = True
                break
            t *= 0.5
        if not melhorou:
            break
        if amortecer and r < TOL_ITERACAO * 1e-1:
            break
    return x


def solve_extinction(m) -> np.ndarray:
    """
    Menor ponto fixo em [0,1]^H de w_h = exp(sum_k m[h,k] (w_k - 1)).
    Subcrítico (raio <= 1) devolve exatamente o vetor de uns.
    """
    M = _como_matriz(m)
    H = M.shape[0]
    if _subcritico(spectral_radius(M)):
        return np.ones(H)

    F = lambda w: w - np.exp(M @ (w - 1.0))
    J = lambda w: np.eye(H) - np.exp(M @ (w - 1.0))[:, None] * M

    # Iteração monótona a partir de zero sobe até o menor ponto fixo
    w = np.zeros(H)
    for it in range(1, MAX_ITERACOES + 1):
        novo = np.exp(M @ (w - 1.0))
        delta = np.max(np.abs(novo - w))
        w = novo
        if delta < TOL_ITERACAO:
            log.debug(f"[ANALITICO] Extinção convergiu em {it} iterações")
            break
    else:
        log.warning(f"[ANALITICO] Extinção sem convergência em {MAX_ITERACOES} iterações; Newton amortecido")
        w = _newton(F, J, w, MAX_PASSOS_NEWTON, amortecer=True)
        residuo = _residuo_extincao(M, w)
        if residuo > 10 * TOL_ITERACAO:
            raise ConvergenceError("solve_extinction não convergiu", w, residuo)

    return _newton(F, J, w, PASSOS_POLIMENTO, amortecer=False)


def solve_fractions(source: Union[ScenarioConfig, np.ndarray, Sequence]) -> np.ndarray:
    """
    Maior solução em [0,1]^H de 1 - z_h = exp(-sum_k A[h,k] z_k),
    com A[h,k] = N_k gamma[k,h]. Aceita o cenário ou a matriz A já montada.
    """
    A = _como_matriz(fraction_weight_matrix(source) if isinstance(source, ScenarioConfig) else source)
    H = A.shape[0]
    # A e a matriz de filhos médios são semelhantes (mesmo espectro)
    if _subcritico(spectral_radius(A)):
        return np.zeros(H)

    F = lambda z: z + np.expm1(-(A @ z))
    J = lambda z: np.eye(H) - np.exp(-(A @ z))[:, None] * A

    # A partir de uns a iteração desce até a maior solução
    z = np.ones(H)
    for it in range(1, MAX_ITERACOES + 1):
        novo = -np.expm1(-(A @ z))
        delta = np.max(np.abs(novo - z))
        z = novo
        if delta < TOL_ITERACAO:
            log.debug(f"[ANALITICO] Frações convergiram em {it} iterações")
            break
    else:
        log.warning(f"[ANALITICO] Frações sem convergência em {MAX_ITERACOES} iterações; Newton amortecido")
        z = _newton(F, J, z, MAX_PASSOS_NEWTON, amortecer=True)
        residuo = _residuo_fracoes(A, z)
        if residuo > 10 * TOL_ITERACAO:
            raise ConvergenceError("solve_fractions não convergiu", z, residuo)

    return _newton(F, J, z, PASSOS_POLIMENTO, amortecer=False)


# ============================================
# FORMAS FECHADAS (H = 1) E MÚLTIPLAS FONTES
# ============================================

def extinction_closed_form_h1(mean_offspring: float) -> float:
    """w_1 = -W(-a e^{-a}) / a"""
    a = float(mean_offspring)
    if not a > 0 or math.isinf(a):
        raise DomainError(f"a = N*gamma deve ser finito e > 0, recebido {mean_offspring!r}")
    if _subcritico(a):
        return 1.0
    return -lambert_w0(-a * math.exp(-a)) / a


def fraction_closed_form_h1(mean_offspring: float, beta: int) -> float:
    """z(beta) = (1 + W/a) (1 - (-W/a)^beta), com W = W(-a e^{-a})"""
    beta = _inteiro_positivo(beta, "beta")
    w1 = extinction_closed_form_h1(mean_offspring)
    if w1 == 1.0:
        return 0.0
    return (1.0 - w1) * (1.0 - w1 ** beta)


def _inteiro_positivo(valor, nome: str) -> int:
    if isinstance(valor, bool) or int(valor) != valor or valor < 1:
        raise DomainError(f"{nome} deve ser inteiro >= 1, recebido {valor!r}")
    return int(valor)


def _validar_fontes(sources: Sequence[int], H: int) -> np.ndarray:
    beta = np.asarray(sources)
    if beta.shape != (H,):
        raise DomainError(f"fontes devem ter {H} entradas, recebido shape {beta.shape}")
    if np.any(beta < 0) or np.any(beta != np.floor(beta)):
        raise DomainError("fontes devem ser inteiros >= 0")
    if beta.sum() < 1:
        raise DomainError("pelo menos uma fonte é necessária")
    return beta.astype(int)


def extinction_multi_source(w: Sequence[float], sources: Sequence[int]) -> float:
    """Probabilidade de extinção de um pacote semeado em beta_h nós de cada tipo: prod w_h^beta_h"""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or np.any(w > 1):
        raise DomainError("w deve ser vetor em [0,1]^H")
    beta = _validar_fontes(sources, w.shape[0])
    return float(np.prod(w ** beta))


def fraction_multi_source(cfg: ScenarioConfig, sources: Sequence[int],
                          result: Optional[AnalyticResult] = None) -> float:
    """z(beta_1..beta_H) = (sum_h N_h z_h / N) (1 - prod_h w_h^beta_h)"""
    res = result if result is not None else analyze(cfg)
    return float(np.clip(res.fraction_for(sources), 0.0, 1.0))


def analyze(cfg: ScenarioConfig) -> AnalyticResult:
    """Resolve raio espectral, extinção e frações de um cenário"""
    m = mean_offspring_matrix(cfg)
    A = fraction_weight_matrix(cfg)
    raio = spectral_radius(m)
    w = solve_extinction(m)
    z = solve_fractions(A)
    resultado = AnalyticResult(
        spectral_radius=raio,
        extinction=w,
        fractions=z,
        supercritical=not _subcritico(raio),
        extinction_residual=_residuo_extincao(m.entries, w),
        fraction_residual=_residuo_fracoes(_como_matriz(A), z),
        counts=cfg.counts.astype(float),
    )
    log.info(f"[ANALITICO] {cfg.name}: R={raio:.6g} supercrítico={resultado.supercritical} "
             f"w={np.array2string(w, precision=6)} z={np.array2string(z, precision=6)}")
    return resultado


# ============================================
# ORÁCULO: PROCESSO DE RAMIFICAÇÃO DE POISSON
# ============================================

def simulate_branching_extinction(
    m,
    source_type: int,
    replications: int,
    rng: np.random.Generator,
    population_cap: int = RAMIFICACAO_POPULACAO_MAX,
    max_generations: int = RAMIFICACAO_GERACOES_MAX,
) -> Tuple[float, float]:
    """
    Monte Carlo do processo de ramificação multi-tipo com filhos Poisson(m[h,k]).
    Uma linhagem que passa de population_cap indivíduos (ou sobrevive a
    max_generations) conta como não extinta.
    Retorna (frequência de extinção, erro padrão). source_type é índice base 0.
    """
    M = _como_matriz(m)
    H = M.shape[0]
    if not 0 <= source_type < H:
        raise DomainError(f"source_type fora de 0..{H - 1}")
    replications = _inteiro_positivo(replications, "replications")

    populacao = np.zeros((replications, H), dtype=np.int64)
    populacao[:, source_type] = 1
    extinta = np.zeros(replications, dtype=bool)
    vivas = np.ones(replications, dtype=bool)

    for _ in range(max_generations):
        idx = np.flatnonzero(vivas)
        if idx.size == 0:
            break
        # Soma de n_h Poissons(m[h,k]) é Poisson(n_h m[h,k])
        filhos = rng.poisson(populacao[idx] @ M)
        populacao[idx] = filhos
        total = filhos.sum(axis=1)
        extinta[idx[total == 0]] = True
        vivas[idx[(total == 0) | (total > population_cap)]] = False

    freq = float(extinta.mean())
    erro = math.sqrt(freq * (1.0 - freq) / replications)
    return freq, erro
