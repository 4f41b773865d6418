#!/usr/bin/env python3
"""
Offload Engine - linha de comando
Comandos: analyze, simulate, optimize, sweep

Uso:
    python cli.py analyze data/cenarios/homogeneo_a2.json
    python cli.py simulate data/cenarios/movel_estatico.json --engine contact --reps 500 --seed 42
    python cli.py optimize data/cenarios/movel_estatico.json --coding on
    python cli.py sweep data/cenarios/wifi_ap.json --param types.0.active_period_s --values 0,100,200
"""

import argparse
import copy
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List

import pandas as pd

from config import (
    APP_NAME,
    APP_VERSION,
    MOTORES_SIMULACAO,
    MODOS_SIMULACAO,
    RESULTADOS_DIR,
    configurar_logging,
    format_number,
    format_percent,
)
from modules.analytic import analyze
from modules.contactsim import run_batch
from modules.core_model import (
    ConfigurationError,
    OffloadError,
    ScenarioConfig,
    SourcesSpec,
    numeric_paths,
    require_valid,
    set_path,
)
from modules.csv_export import CsvExporter, analysis_frame, rates_frame, replications_frame
from modules.loadopt import Coding, MODELOS_SEM_CODIGO, optimize_beta
from modules.mobilitysim import estimate_rates, run_spatial_batch
from modules.scenario_manager import RunManifest, load_scenario, load_scenario_dict
from modules.sharing import resolve_sources

log = logging.getLogger("offload.cli")


class UsageError(Exception):
    """Erro de uso detectado depois do argparse (sai com código 2)"""


# ============================================
# EXECUÇÃO DOS COMANDOS (retornam os CSVs a gravar)
# ============================================

def _preparar_fontes(cfg: ScenarioConfig, args) -> ScenarioConfig:
    tipo = getattr(args, "source_type", None)
    beta = getattr(args, "beta", None)
    if tipo is not None and beta is not None:
        raise UsageError("use --source-type ou --beta, não ambos")
    if tipo is not None:
        if not 1 <= tipo <= cfg.num_types:
            raise UsageError(f"--source-type deve estar em 1..{cfg.num_types}")
        por_tipo = [0] * cfg.num_types
        por_tipo[tipo - 1] = 1
        return replace(cfg, sources=SourcesSpec(per_type=tuple(por_tipo)))
    if beta is not None:
        return replace(cfg, sources=SourcesSpec(beta=beta))
    return cfg


def executar_analise(cfg: ScenarioConfig, args) -> Dict[str, pd.DataFrame]:
    res = analyze(cfg)
    alocacao = resolve_sources(cfg, None, res)
    beta = alocacao.beta
    extras = {
        "sources_beta": beta,
        "z_sources": res.fraction_for(alocacao.per_type_counts),
        "load_coded_total": optimize_beta(cfg, Coding.ERASURE_CODED, res, betas=[beta]).entries[0].total,
        "load_uncoded_total": optimize_beta(cfg, Coding.UNCODED, res, betas=[beta]).entries[0].total,
        "baseline": cfg.total_nodes * cfg.message_count,
    }

    print(f"\n{APP_NAME} - análise de {cfg.name}")
    print(f"  Raio espectral R_q : {format_number(res.spectral_radius)}")
    print(f"  Supercrítico       : {'sim' if res.supercritical else 'não'}")
    for t, w, z in zip(cfg.types, res.extinction, res.fractions):
        print(f"  Tipo {t.id} ({t.label}): w={format_number(w)}  z={format_number(z)}")
    print(f"  z(fontes={extras['sources_beta']}) = {format_percent(extras['z_sources'], 2)}")
    print(f"  Carga (codificado / sem código / sem cooperação): "
          f"{format_number(extras['load_coded_total'], 2)} / {format_number(extras['load_uncoded_total'], 2)} / "
          f"{format_number(extras['baseline'], 0)}")
    return {"analyze.csv": analysis_frame(cfg, res, extras)}


def executar_simulacao(cfg: ScenarioConfig, args) -> Dict[str, pd.DataFrame]:
    cfg = _preparar_fontes(cfg, args)
    saidas = {}
    if args.engine == "contact" and cfg.contact_rates is None:
        log.info("[CLI] Cenário sem taxas de contato: estimando pelo simulador espacial")
        taxas = estimate_rates(cfg)
        cfg = cfg.with_rates(taxas)
        saidas["rates.csv"] = rates_frame(taxas)

    lote = run_batch if args.engine == "contact" else run_spatial_batch
    resultados, resumo = lote(
        cfg, None, replications=args.reps, seed=args.seed, mode=args.mode,
        horizon=args.horizon, workers=args.workers,
    )
    saidas["replications.csv"] = replications_frame(resultados, cfg)
    saidas["summary.csv"] = resumo.frame

    print(f"\n{APP_NAME} - simulação ({args.engine}) de {cfg.name}: {resumo.replications} replicações")
    for _, linha in resumo.frame.iterrows():
        fracoes = [linha[c] for c in resumo.frame.columns if c.startswith("mean_fraction_type_")]
        print(f"  Pacote {linha['packet_id']} (tipo {linha['source_type']}): "
              f"espalhamento={format_percent(linha['spread_out_freq'], 2)} "
              f"frações={', '.join(format_percent(f, 2) for f in fracoes)}")
    print(f"  Complemento médio: {format_number(resumo.complement_mean, 2)}")
    return saidas


def executar_otimizacao(cfg: ScenarioConfig, args) -> Dict[str, pd.DataFrame]:
    res = analyze(cfg)
    codificacoes = {"on": [Coding.ERASURE_CODED], "off": [Coding.UNCODED],
                    "both": [Coding.ERASURE_CODED, Coding.UNCODED]}[args.coding]
    saidas = {}
    print(f"\n{APP_NAME} - otimização de beta para {cfg.name}")
    for coding in codificacoes:
        curva = optimize_beta(cfg, coding, res, uncoded_model=args.uncoded_model)
        beta, total = curva.optimum
        saidas[f"load_{coding.value}.csv"] = curva.to_frame()
        print(f"  {coding.value:14s}: beta*={beta}  total*={format_number(total, 4)}  "
              f"(sem cooperação: {format_number(curva.baseline, 0)})")
    return saidas


COMANDOS = {
    "analyze": executar_analise,
    "simulate": executar_simulacao,
    "optimize": executar_otimizacao,
}


# ============================================
# VARREDURA DE PARÂMETROS
# ============================================

def parse_values(texto: str) -> List[float]:
    """Lista separada por vírgulas; 'a..b' expande a faixa inteira inclusiva"""
    valores = []
    for parte in (p.strip() for p in texto.split(",")):
        if not parte:
            continue
        if ".." in parte:
            a, b = parte.split("..", 1)
            try:
                inicio, fim = int(a), int(b)
            except ValueError:
                raise UsageError(f"faixa inválida: {parte!r}")
            if fim < inicio:
                raise UsageError(f"faixa vazia: {parte!r}")
            valores.extend(range(inicio, fim + 1))
        else:
            try:
                numero = float(parte)
            except ValueError:
                raise UsageError(f"valor não numérico: {parte!r}")
            valores.append(int(numero) if numero.is_integer() else numero)
    if not valores:
        raise UsageError("--values não pode ser vazio")
    return valores


def executar_varredura(caminho: Path, args) -> Dict[str, pd.DataFrame]:
    base = load_scenario_dict(caminho)
    valores = parse_values(args.values)
    validos = numeric_paths(base)
    quadros = []
    for valor in valores:
        dados = copy.deepcopy(base)
        try:
            set_path(dados, args.param, valor)
        except ConfigurationError as e:
            raise UsageError(f"{e.args[0]}; caminhos válidos: {', '.join(e.valid_paths or validos)}")
        cfg = require_valid(ScenarioConfig.from_dict(dados))
        log.info(f"[CLI] Varredura {args.param}={valor}")
        for quadro in COMANDOS[args.command](cfg, args).values():
            quadro = quadro.copy()
            quadro.insert(0, "param_value", valor)
            quadro.insert(0, "param", args.param)
            quadros.append(quadro)
    return {f"sweep_{args.command}.csv": pd.concat(quadros, ignore_index=True)}


# ============================================
# ARGUMENTOS
# ============================================

def _adicionar_opcoes_simulacao(p: argparse.ArgumentParser):
    p.add_argument("--engine", choices=MOTORES_SIMULACAO, default="contact",
                   help="contact (encontros de Poisson) ou spatial (toro com mobilidade)")
    p.add_argument("--reps", type=int, default=None, help="replicações (padrão: do cenário)")
    p.add_argument("--seed", type=int, default=None, help="semente mestre (padrão: rng_seed do cenário)")
    p.add_argument("--source-type", type=int, default=None, help="um pacote num nó do tipo h (id base 1)")
    p.add_argument("--beta", type=int, default=None, help="beta pacotes com a alocação de menor extinção")
    p.add_argument("--mode", choices=MODOS_SIMULACAO, default=None, help="fluxo de encontros por pacote ou único")
    p.add_argument("--horizon", type=float, default=None, help="prazo da fase de compartilhamento (s)")


def _adicionar_opcoes_otimizacao(p: argparse.ArgumentParser):
    p.add_argument("--coding", choices=["on", "off", "both"], default="on",
                   help="on = codificação de apagamento, off = sem código")
    p.add_argument("--uncoded-model", choices=MODELOS_SEM_CODIGO, default="multi_source",
                   help="modelo da carga sem código")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offload", description=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("--out", type=Path, default=RESULTADOS_DIR, help="pasta dos CSVs e do manifesto")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (padrão: OFFLOAD_LOG_LEVEL ou INFO)")
    parser.add_argument("--workers", type=int, default=None, help="processos para as replicações (padrão: OFFLOAD_THREADS)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("analyze", help="raio espectral, extinção e frações")
    p.add_argument("config", type=Path)

    p = sub.add_parser("simulate", help="lote de replicações Monte Carlo")
    p.add_argument("config", type=Path)
    _adicionar_opcoes_simulacao(p)

    p = sub.add_parser("optimize", help="curva de carga beta + Y e beta ótimo")
    p.add_argument("config", type=Path)
    _adicionar_opcoes_otimizacao(p)

    p = sub.add_parser("sweep", help="repete um comando variando um campo numérico")
    p.add_argument("config", type=Path)
    p.add_argument("--param", required=True, help="caminho pontuado, ex.: types.0.active_period_s")
    p.add_argument("--values", required=True, help="lista (0,100,200) ou faixa inteira (1..50)")
    p.add_argument("--command", choices=sorted(COMANDOS), default="analyze")
    _adicionar_opcoes_simulacao(p)
    _adicionar_opcoes_otimizacao(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configurar_logging(args.log_level)

    try:
        cfg = load_scenario(args.config)
        semente = getattr(args, "seed", None)
        manifesto = RunManifest(
            command=args.cmd,
            scenario=cfg.to_dict(),
            seed=cfg.rng_seed if semente is None else semente,
            arguments={k: str(v) if isinstance(v, Path) else v for k, v in vars(args).items()},
        )
        if args.cmd == "sweep":
            saidas = executar_varredura(args.config, args)
        else:
            saidas = COMANDOS[args.cmd](cfg, args)

        exportador = CsvExporter(args.out, cfg.name)
        for nome, quadro in saidas.items():
            exportador.escrever(quadro, nome)
        manifesto.finish(exportador.arquivos)
        manifesto.write(args.out)
    except UsageError as e:
        parser.error(str(e))
    except OffloadError as e:
        log.error(f"[CLI] {e}")
        print(f"erro: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
