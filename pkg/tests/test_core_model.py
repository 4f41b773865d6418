import math
from dataclasses import replace

import numpy as np
import pytest

from modules.core_model import (
    ConfigurationError,
    ContactMatrix,
    DomainError,
    NodeTypeSpec,
    ScenarioConfig,
    SourcesSpec,
    gamma_matrix,
    meeting_probability,
    numeric_paths,
    require_valid,
    set_path,
    validate_scenario,
)
from tests.conftest import montar_cenario


# ============================================
# meeting_probability
# ============================================

def test_probabilidade_de_encontro_valor_conhecido():
    assert meeting_probability(0.1, 10) == pytest.approx(0.63212, abs=1e-5)


def test_probabilidade_zero_quando_taxa_ou_periodo_nulos():
    assert meeting_probability(0.0, 100) == 0.0
    assert meeting_probability(0.5, 0.0) == 0.0
    assert meeting_probability(math.inf, 0.0) == 0.0


def test_taxa_infinita_da_um_exato():
    assert meeting_probability(math.inf, 30) == 1.0


def test_probabilidade_precisa_para_produto_pequeno():
    p = meeting_probability(1e-12, 1e-3)
    assert p == pytest.approx(1e-15, rel=1e-9)


@pytest.mark.parametrize("rate,tau", [(-0.1, 10), (0.1, -1), (math.nan, 1), (1, math.nan)])
def test_probabilidade_rejeita_fora_do_dominio(rate, tau):
    with pytest.raises(DomainError):
        meeting_probability(rate, tau)


def test_probabilidade_monotona_em_tau():
    valores = [meeting_probability(0.01, t) for t in (0, 1, 10, 100, 1000)]
    assert valores == sorted(valores)
    assert all(0.0 <= v <= 1.0 for v in valores)


# ============================================
# gamma_matrix
# ============================================

def test_matriz_gamma_assimetrica():
    cfg = montar_cenario([10, 10], [10.0, 5.0], [[0.1, 0.2], [0.2, 0.3]])
    gamma = gamma_matrix(cfg)
    esperado = np.array([[0.63212, 0.86466], [0.63212, 0.77687]])
    np.testing.assert_allclose(gamma, esperado, atol=1e-5)


def test_matriz_gamma_equivariante_a_permutacao():
    gerador = np.random.default_rng(8)
    counts = [10, 20, 30]
    taus = [5.0, 40.0, 300.0]
    taxas = gerador.uniform(0.0, 0.05, (3, 3))
    taxas = (taxas + taxas.T) / 2.0
    gamma = gamma_matrix(montar_cenario(counts, taus, taxas.tolist()))
    for perm in ([2, 0, 1], [1, 0, 2], [2, 1, 0]):
        permutado = montar_cenario([counts[i] for i in perm], [taus[i] for i in perm],
                                   taxas[np.ix_(perm, perm)].tolist())
        np.testing.assert_array_equal(gamma_matrix(permutado), gamma[np.ix_(perm, perm)])


@pytest.mark.parametrize("rate,tau", [(0.14, 100.0), (1.0, 14.0), (14.0, 1.0), (0.5, 60.0)])
def test_gamma_satura_quando_produto_grande(rate, tau):
    assert meeting_probability(rate, tau) > 1.0 - 1e-6
    assert meeting_probability(rate, tau) <= 1.0


def test_matriz_gamma_sem_taxas():
    cfg = montar_cenario([10], [10.0], None)
    with pytest.raises(ConfigurationError):
        gamma_matrix(cfg)


def test_matriz_gamma_com_enlace_cabeado():
    cfg = montar_cenario([5, 5], [30.0, 500.0], [[0.001, 0.001], [0.001, math.inf]])
    gamma = gamma_matrix(cfg)
    assert gamma[1, 1] == 1.0
    assert gamma[0, 0] < 1.0


# ============================================
# Validação
# ============================================

def _caminhos(rel):
    return {f.path for f in rel.failures}


def test_cenario_valido_passa(cenario_a2):
    rel = validate_scenario(cenario_a2)
    assert rel.ok
    assert require_valid(cenario_a2) is cenario_a2


def test_tipo_sem_nos_falha():
    cfg = montar_cenario([0, 10], [10.0, 10.0], [[0.1, 0.1], [0.1, 0.1]])
    rel = validate_scenario(cfg)
    assert not rel.ok
    assert "types.0.count" in _caminhos(rel)
    assert any("count >= 1" in m for m in rel.messages())


def test_raio_maior_que_meia_aresta_falha():
    cfg = montar_cenario([10], [10.0], [[0.1]], side_length=100.0, radio_range=60.0)
    rel = validate_scenario(cfg)
    assert "radio_range_m" in _caminhos(rel)
    assert any("radio_range ≥ L/2" in m for m in rel.messages())


def test_taxas_assimetricas_falham():
    cfg = montar_cenario([10, 10], [10.0, 10.0], [[0.1, 0.2], [0.3, 0.1]])
    rel = validate_scenario(cfg)
    assert "contact_rates_hz.0.1" in _caminhos(rel)


def test_fontes_acima_da_populacao_falham():
    cfg = montar_cenario([3, 3], [10.0, 10.0], [[0.1, 0.1], [0.1, 0.1]],
                         sources=SourcesSpec(per_type=(4, 0)))
    rel = validate_scenario(cfg)
    assert "sources.per_type.0" in _caminhos(rel)


def test_validacao_reune_todas_as_falhas():
    cfg = montar_cenario([0], [-1.0], [[-0.1]], threshold_fraction=1.5, replications=0)
    rel = validate_scenario(cfg)
    assert {"types.0.count", "types.0.active_period_s", "contact_rates_hz.0.0",
            "simulation.threshold_fraction", "simulation.replications"} <= _caminhos(rel)
    with pytest.raises(ConfigurationError):
        require_valid(cfg)


# ============================================
# JSON
# ============================================

def test_dicionario_preserva_cenario(cenario_movel_estatico):
    dados = cenario_movel_estatico.to_dict()
    volta = ScenarioConfig.from_dict(dados)
    assert volta == cenario_movel_estatico


def test_taxa_infinita_vira_texto_no_json():
    cfg = montar_cenario([2, 2], [1.0, 1.0], [[0.1, 0.0], [0.0, math.inf]])
    dados = cfg.to_dict()
    assert dados["contact_rates_hz"][1][1] == "inf"
    assert math.isinf(ScenarioConfig.from_dict(dados).contact_rates.rates[1][1])


def test_campo_obrigatorio_ausente_traz_caminho():
    with pytest.raises(ConfigurationError) as info:
        ScenarioConfig.from_dict({"side_length_m": 100, "radio_range_m": 10, "types": [{"id": 1}]})
    assert info.value.path == "types.0.count"


def test_valor_nao_numerico_traz_caminho():
    dados = {"side_length_m": "grande", "radio_range_m": 10, "types": [{"id": 1, "count": 3}]}
    with pytest.raises(ConfigurationError) as info:
        ScenarioConfig.from_dict(dados)
    assert info.value.path == "side_length_m"


def test_erro_de_configuracao_formata_linha_e_coluna():
    e = ConfigurationError("Expecting value", path="x.json", line=3, column=7)
    assert str(e) == "x.json:3:7: Expecting value"


# ============================================
# Caminhos pontuados
# ============================================

def test_caminhos_numericos(cenario_a2):
    caminhos = numeric_paths(cenario_a2.to_dict())
    assert "types.0.active_period_s" in caminhos
    assert "contact_rates_hz.0.0" in caminhos
    assert "name" not in caminhos


def test_set_path_altera_lista_e_dicionario(cenario_a2):
    dados = cenario_a2.to_dict()
    set_path(dados, "types.0.active_period_s", 250)
    assert dados["types"][0]["active_period_s"] == 250


def test_set_path_desconhecido_lista_validos(cenario_a2):
    with pytest.raises(ConfigurationError) as info:
        set_path(cenario_a2.to_dict(), "types.0.velocidade", 3)
    assert "types.0.count" in info.value.valid_paths


def test_set_path_beta_substitui_por_tipo():
    cfg = montar_cenario([3, 3], [1.0, 1.0], [[0.1, 0.1], [0.1, 0.1]],
                         sources=SourcesSpec(per_type=(1, 1)))
    novo = cfg.with_value("sources.beta", 4)
    assert novo.sources.beta == 4
    assert novo.sources.per_type is None


def test_nos_em_blocos_por_tipo():
    cfg = montar_cenario([2, 3], [1.0, 1.0], [[0.1, 0.1], [0.1, 0.1]])
    np.testing.assert_array_equal(cfg.node_types(), [0, 0, 1, 1, 1])
    np.testing.assert_array_equal(cfg.first_node_of_type(), [0, 2])
    assert cfg.total_nodes == 5


def test_matriz_estimada_marca_entradas_sem_amostra():
    m = ContactMatrix(rates=[[0.1, 0.2], [0.2, 0.0]], samples=[[5, 3], [3, 0]])
    np.testing.assert_array_equal(m.unestimated, [[False, False], [False, True]])


def test_rotulo_do_tipo():
    assert NodeTypeSpec(id=2, count=1).label == "tipo-2"
    assert NodeTypeSpec(id=2, count=1, name="ap").label == "ap"
    assert replace(NodeTypeSpec(id=1, count=1), name="x").label == "x"


def test_entrega_em_alcance_lida_do_json(cenario_a2):
    dados = cenario_a2.to_dict()
    assert dados["simulation"]["in_range_delivery"] is False
    dados["simulation"]["in_range_delivery"] = True
    assert ScenarioConfig.from_dict(dados).simulation.in_range_delivery
    dados["simulation"]["in_range_delivery"] = 1
    with pytest.raises(ConfigurationError) as info:
        ScenarioConfig.from_dict(dados)
    assert info.value.path == "simulation.in_range_delivery"
