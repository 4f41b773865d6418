"""
Fixtures compartilhadas: cenários pequenos montados em código
"""

import math
from pathlib import Path

import numpy as np
import pytest

from modules.core_model import (
    ContactMatrix,
    NodeTypeSpec,
    ScenarioConfig,
    SimulationSettings,
    SourcesSpec,
)

CENARIOS = Path(__file__).resolve().parent.parent / "data" / "cenarios"


def taxa_para(media_filhos: float, n_destino: int, tau: float) -> float:
    """Taxa lambda que dá N_k * gamma = media_filhos com período ativo tau"""
    return -math.log1p(-media_filhos / n_destino) / tau


def montar_cenario(counts, taus, rates, speeds=None, message_count=1, side_length=1000.0,
                   radio_range=20.0, name="teste", sources=None, **sim) -> ScenarioConfig:
    speeds = speeds or [0.0] * len(counts)
    tipos = [
        NodeTypeSpec(id=i + 1, count=n, speed=v, active_period=tau, name=f"t{i + 1}")
        for i, (n, tau, v) in enumerate(zip(counts, taus, speeds))
    ]
    return ScenarioConfig(
        types=tipos,
        side_length=side_length,
        radio_range=radio_range,
        message_count=message_count,
        contact_rates=ContactMatrix(rates=rates) if rates is not None else None,
        rng_seed=123,
        name=name,
        sources=sources or SourcesSpec(beta=1),
        simulation=SimulationSettings(**sim),
    )


@pytest.fixture
def homogeneo():
    """Fábrica de cenários H=1 com N*gamma = a"""
    def fabrica(a: float, N: int = 100, tau: float = 100.0, **kw) -> ScenarioConfig:
        return montar_cenario([N], [tau], [[taxa_para(a, N, tau)]], **kw)
    return fabrica


@pytest.fixture
def cenario_a2(homogeneo):
    return homogeneo(2.0)


@pytest.fixture
def cenario_subcritico(homogeneo):
    return homogeneo(0.5, N=960)


@pytest.fixture
def cenario_desacoplado():
    """Dois tipos sem contato cruzado: matriz de filhos [[2, 0], [0, 0.5]]"""
    return montar_cenario(
        [100, 100], [1.0, 1.0],
        [[taxa_para(2.0, 100, 1.0), 0.0], [0.0, taxa_para(0.5, 100, 1.0)]],
    )


@pytest.fixture
def cenario_movel_estatico():
    """Móveis e estáticos em escala reduzida (mesma densidade de encontros por nó)"""
    N1 = N2 = 120
    tau = 30.0
    return montar_cenario(
        [N1, N2], [tau, tau],
        [[taxa_para(1.6, N1, tau), taxa_para(1.2, N2, tau)],
         [taxa_para(1.2, N2, tau), 0.0]],
        speeds=[10.0, 0.0],
        name="movel_estatico_reduzido",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
