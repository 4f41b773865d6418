import itertools

import numpy as np
import pytest

from config import COLUNAS_CARGA
from modules.analytic import analyze, extinction_multi_source, fraction_multi_source
from modules.core_model import CapacityError, DomainError
from modules.loadopt import (
    Coding,
    LoadCurve,
    LoadEntry,
    SourceAllocation,
    allocate_by_extinction,
    allocate_sources,
    assign_copies,
    complement_load_coded,
    complement_load_heterogeneous,
    complement_load_uncoded,
    optimize_beta,
    packet_spread_probabilities,
    uncoded_even_allocation,
)
from modules.scenario_manager import load_scenario
from tests.conftest import CENARIOS, montar_cenario


def _cenario(N, M):
    return montar_cenario([N], [1.0], [[0.1]], message_count=M)


# ============================================
# Carga do complemento
# ============================================

def test_carga_codificada_casos_triviais():
    assert complement_load_coded(_cenario(10, 1), 5, 0.0) == pytest.approx(10.0)
    assert complement_load_coded(_cenario(10, 1), 1, 1.0) == pytest.approx(0.0)


def test_carga_codificada_enumerada():
    # B em {0,1,2} com pmf 1/4, 1/2, 1/4
    assert complement_load_coded(_cenario(100, 2), 2, 0.5) == pytest.approx(100.0)


def test_carga_codificada_beta_grande_estavel():
    Y = complement_load_coded(_cenario(960, 5), 900, 0.63)
    assert 0.0 <= Y < 1e-100


def test_carga_codificada_rejeita_probabilidade_invalida():
    with pytest.raises(DomainError):
        complement_load_coded(_cenario(10, 1), 2, 1.2)
    with pytest.raises(DomainError):
        complement_load_coded(_cenario(10, 1), 0, 0.5)


def test_poisson_binomial_com_probabilidades_iguais_e_binomial():
    cfg = _cenario(50, 4)
    for beta in (1, 3, 7, 12):
        esperado = complement_load_coded(cfg, beta, 0.37)
        assert complement_load_heterogeneous(cfg, [0.37] * beta) == pytest.approx(esperado, rel=1e-12)


def test_poisson_binomial_enumerado():
    cfg = _cenario(10, 2)
    p, q = 0.2, 0.7
    # P(B=0) = 0.24, P(B=1) = 0.2*0.3 + 0.8*0.7 = 0.62
    assert complement_load_heterogeneous(cfg, [p, q]) == pytest.approx(10 * (2 * 0.24 + 0.62))


def test_poisson_binomial_sem_pacotes_e_ultimo_passo():
    cfg = _cenario(10, 3)
    assert complement_load_heterogeneous(cfg, []) == pytest.approx(30.0)
    # só o último estado do gerador conta: um pacote certo tira exatamente um da falta
    assert complement_load_heterogeneous(cfg, [0.0, 0.0, 1.0]) == pytest.approx(20.0)


# ============================================
# Alocação das fontes
# ============================================

def test_alocacao_cabe_no_melhor_tipo():
    alocacao = allocate_by_extinction([0.2, 0.9], [5, 5], 3)
    assert alocacao.per_type_counts == (3, 0)
    assert alocacao.ordering == (1, 2)


def test_alocacao_transborda():
    alocacao = allocate_by_extinction([0.2, 0.9], [5, 5], 7)
    assert alocacao.per_type_counts == (5, 2)
    assert alocacao.beta == 7
    assert alocacao.slots() == [0] * 5 + [1] * 2


def test_alocacao_empate_pelo_indice():
    assert allocate_by_extinction([0.5, 0.5], [3, 3], 4).per_type_counts == (3, 1)


def test_alocacao_menor_extincao_primeiro():
    alocacao = allocate_by_extinction([0.9, 0.2, 0.5], [2, 2, 2], 3)
    assert alocacao.per_type_counts == (0, 2, 1)
    assert alocacao.ordering == (2, 3, 1)


def _todas_as_alocacoes(counts, beta):
    grade = np.array(list(itertools.product(*(range(n + 1) for n in counts))))
    return grade[grade.sum(axis=1) == beta]


def test_alocacao_igual_enumeracao_exaustiva():
    gerador = np.random.default_rng(17)
    for H in (1, 2, 3):
        for counts in itertools.product(range(1, 6), repeat=H):
            # uma casa decimal força empates e os extremos 0 e 1
            w = np.round(gerador.uniform(0.0, 1.0, H), 1)
            for beta in range(1, min(10, sum(counts)) + 1):
                alocacao = allocate_by_extinction(w, counts, beta)
                assert alocacao.beta == beta
                assert all(b <= n for b, n in zip(alocacao.per_type_counts, counts))
                melhor = np.min(np.prod(w ** _todas_as_alocacoes(counts, beta), axis=1))
                obtido = extinction_multi_source(w, alocacao.per_type_counts)
                assert obtido == pytest.approx(melhor, rel=1e-12, abs=1e-300)


def test_alocacao_acima_da_capacidade():
    with pytest.raises(CapacityError):
        allocate_by_extinction([0.2, 0.9], [5, 5], 11)


def test_alocacao_do_cenario_prefere_moveis(cenario_movel_estatico):
    res = analyze(cenario_movel_estatico)
    assert res.extinction[0] < res.extinction[1]
    alocacao = allocate_sources(cenario_movel_estatico, 130, res)
    assert alocacao.per_type_counts == (120, 10)


def test_alocacao_minimiza_extincao(cenario_movel_estatico):
    res = analyze(cenario_movel_estatico)
    alocacao = allocate_sources(cenario_movel_estatico, 4, res)
    melhor = fraction_multi_source(cenario_movel_estatico, alocacao.per_type_counts, res)
    for b1 in range(0, 5):
        assert melhor >= fraction_multi_source(cenario_movel_estatico, [b1, 4 - b1], res) - 1e-15


def test_probabilidades_por_pacote(cenario_movel_estatico):
    res = analyze(cenario_movel_estatico)
    probs = packet_spread_probabilities(cenario_movel_estatico, 122, res)
    assert probs.shape == (122,)
    assert np.all(probs[:120] == probs[0])
    assert probs[121] < probs[0]


# ============================================
# Referência sem codificação
# ============================================

@pytest.mark.parametrize("M,beta,esperado", [(3, 7, [3, 2, 2]), (2, 0, [0, 0]), (1, 5, [5])])
def test_divisao_uniforme(M, beta, esperado):
    assert uncoded_even_allocation(M, beta) == esperado


def test_copias_em_rodizio():
    assert assign_copies([2, 1], [0, 0, 1]) == [[0, 2], [1]]
    assert assign_copies([0, 2], [0, 1]) == [[], [0, 1]]


def test_sem_codigo_nada_enviado(homogeneo):
    cfg = homogeneo(2.0, message_count=3)
    assert complement_load_uncoded(cfg, [0, 0, 0]) == pytest.approx(300.0)


def test_sem_codigo_duas_mensagens(homogeneo):
    cfg = homogeneo(2.0, N=960, message_count=2)
    Y = complement_load_uncoded(cfg, uncoded_even_allocation(2, 2))
    assert Y == pytest.approx(960 * 2 * (1 - 0.634905), abs=0.05)
    assert Y == pytest.approx(701.0, abs=0.1)


def test_sem_codigo_uma_mensagem_igual_codificado(homogeneo):
    cfg = homogeneo(2.0)
    res = analyze(cfg)
    z1 = res.fraction_for([1])
    assert complement_load_uncoded(cfg, [1], res) == pytest.approx(complement_load_coded(cfg, 1, z1), rel=1e-12)
    for beta in (2, 5, 9):
        independente = complement_load_uncoded(cfg, [beta], res, model="independent")
        assert independente == pytest.approx(complement_load_coded(cfg, beta, z1), rel=1e-10)


def test_sem_codigo_multi_fontes_usa_fracao_conjunta(homogeneo):
    cfg = homogeneo(2.0)
    res = analyze(cfg)
    Y = complement_load_uncoded(cfg, [3], res)
    assert Y == pytest.approx(100 * (1 - fraction_multi_source(cfg, [3], res)), rel=1e-12)


def test_sem_codigo_modelo_invalido(homogeneo):
    with pytest.raises(DomainError):
        complement_load_uncoded(homogeneo(2.0), [1], model="copias")


# ============================================
# Otimização de beta
# ============================================

def test_otimo_subcritico(homogeneo):
    cfg = homogeneo(0.5, N=960)
    curva = optimize_beta(cfg)
    assert curva.optimum == (1, pytest.approx(961.0))
    assert curva.baseline == 960.0
    assert len(curva.entries) == 960


def test_curva_codificada_h1_usa_binomial(homogeneo):
    cfg = homogeneo(2.0, message_count=4)
    res = analyze(cfg)
    curva = optimize_beta(cfg, Coding.ERASURE_CODED, res)
    z1 = res.fraction_for([1])
    for e in curva.entries[:20]:
        assert e.Y == pytest.approx(complement_load_coded(cfg, e.beta, z1), rel=1e-12)
        assert e.total == e.beta + e.Y
        assert e.Y >= 0


def test_curva_heterogenea_incremental(cenario_movel_estatico):
    cfg = montar_cenario(
        [int(n) for n in cenario_movel_estatico.counts],
        list(cenario_movel_estatico.active_periods),
        cenario_movel_estatico.contact_rates.rates,
        message_count=5,
    )
    res = analyze(cfg)
    curva = optimize_beta(cfg, Coding.ERASURE_CODED, res, betas=[1, 2, 50, 125, 200])
    for e in curva.entries:
        direto = complement_load_heterogeneous(cfg, packet_spread_probabilities(cfg, e.beta, res))
        assert e.Y == pytest.approx(direto, rel=1e-10, abs=1e-12)


def test_curva_formato_e_cruzamento(homogeneo):
    cfg = homogeneo(2.0, N=960, message_count=10)
    res = analyze(cfg)
    codificada = optimize_beta(cfg, Coding.ERASURE_CODED, res)
    sem_codigo = optimize_beta(cfg, Coding.UNCODED, res)
    beta, total = codificada.optimum
    assert 10 < beta < 960
    assert total < codificada.total_at(1)
    assert total < codificada.total_at(960)
    assert total < codificada.baseline
    assert codificada.total_at(30) < sem_codigo.total_at(30)


def test_carga_nao_cresce_com_z1():
    cfg = _cenario(50, 4)
    for beta in (1, 4, 10, 40):
        cargas = [complement_load_coded(cfg, beta, z) for z in np.linspace(0.0, 1.0, 101)]
        assert np.all(np.diff(cargas) <= 1e-12)


def test_total_cai_no_maximo_n_vezes_m(homogeneo, cenario_movel_estatico):
    for cfg in (homogeneo(2.0, N=200, message_count=3), cenario_movel_estatico):
        res = analyze(cfg)
        N, M = cfg.total_nodes, cfg.message_count
        for coding in Coding:
            totais = np.array([e.total for e in optimize_beta(cfg, coding, res).entries])
            assert np.all(totais[:-1] - totais[1:] <= N * M)


def test_codificada_nao_supera_sem_codigo_em_grade(homogeneo):
    for a in (1.2, 2.0, 4.0):
        for M in (1, 2, 3, 5):
            cfg = homogeneo(a, message_count=M)
            res = analyze(cfg)
            z1 = res.fraction_for([1])
            for beta in range(M, 41, 3):
                codificada = complement_load_coded(cfg, beta, z1)
                sem_codigo = complement_load_uncoded(cfg, uncoded_even_allocation(M, beta), res)
                assert codificada <= sem_codigo + 1e-9


def test_cargas_conferem_com_sorteio_de_ocupacao(homogeneo, rng):
    N, M, beta, amostras = 100, 3, 7, 40_000
    cfg = homogeneo(2.0, N=N, message_count=M)
    res = analyze(cfg)

    # codificado: cada pacote chega ao nó com probabilidade z(1), independente dos outros
    recebidos = rng.binomial(beta, res.fraction_for([1]), amostras)
    faltam = N * np.maximum(M - recebidos, 0)
    codificada = complement_load_coded(cfg, beta, res.fraction_for([1]))
    assert abs(faltam.mean() - codificada) <= 4 * faltam.std() / np.sqrt(amostras)

    # sem código: a mensagem m chega com z(beta_m)
    copias = uncoded_even_allocation(M, beta)
    chegou = np.stack([rng.random(amostras) < fraction_multi_source(cfg, [b], res) for b in copias])
    faltam = N * (~chegou).sum(axis=0)
    sem_codigo = complement_load_uncoded(cfg, copias, res)
    assert abs(faltam.mean() - sem_codigo) <= 4 * faltam.std() / np.sqrt(amostras)
    assert codificada < sem_codigo


def test_curva_do_cenario_movel_estatico_em_escala_real():
    cfg = load_scenario(CENARIOS / "movel_estatico.json")
    assert cfg.total_nodes == 960 and cfg.message_count == 1
    res = analyze(cfg)
    assert res.supercritical
    codificada = optimize_beta(cfg, Coding.ERASURE_CODED, res)
    sem_codigo = optimize_beta(cfg, Coding.UNCODED, res)
    beta, total = codificada.optimum
    assert 1 < beta < 960
    assert total < codificada.total_at(1)
    assert total < codificada.total_at(960)
    assert codificada.baseline == 960.0
    assert total < codificada.baseline
    for e_cod, e_sem in zip(codificada.entries, sem_codigo.entries):
        assert e_cod.beta == e_sem.beta
        assert e_cod.total <= e_sem.total + 1e-9


def test_curva_em_tabela(homogeneo):
    curva = optimize_beta(homogeneo(2.0, N=20), betas=[1, 2, 3])
    quadro = curva.to_frame()
    assert list(quadro.columns) == COLUNAS_CARGA
    assert list(quadro["beta"]) == [1, 2, 3]
    assert set(quadro["coding"]) == {"erasure_coded"}


def test_empate_fica_com_menor_beta():
    curva = LoadCurve(entries=(LoadEntry(1, 2.0), LoadEntry(2, 1.0), LoadEntry(3, 0.0)),
                      coding=Coding.UNCODED, baseline=10.0)
    assert curva.optimum == (1, 3.0)


def test_beta_fora_da_faixa(homogeneo):
    cfg = homogeneo(2.0, N=20)
    with pytest.raises(CapacityError):
        optimize_beta(cfg, betas=[0, 1])
    with pytest.raises(CapacityError):
        optimize_beta(cfg, betas=[21])


def test_alocacao_guarda_ordem():
    alocacao = SourceAllocation(per_type_counts=[0, 2], ordering=[2, 1])
    assert alocacao.slots() == [1, 1]
