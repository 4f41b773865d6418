"""
Exportação CSV - Offload Engine
Esquemas congelados (ver GUIA_FORMATOS.md); gravação atômica
"""

import logging
import os
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from config import COLUNAS_TAXAS, FORMATO_FLOAT_CSV
from modules.analytic import AnalyticResult
from modules.core_model import ContactMatrix, OffloadError, ScenarioConfig
from modules.sharing import SimOutcome

log = logging.getLogger(__name__)


def analysis_frame(cfg: ScenarioConfig, result: AnalyticResult, extras: Optional[dict] = None) -> pd.DataFrame:
    """Formato longo: metric, type, value (type vazio para métricas do cenário)"""
    linhas = [
        ("spectral_radius", "", result.spectral_radius),
        ("supercritical", "", int(result.supercritical)),
    ]
    for t, w in zip(cfg.types, result.extinction):
        linhas.append(("extinction", t.id, float(w)))
    for t, z in zip(cfg.types, result.fractions):
        linhas.append(("fraction", t.id, float(z)))
    linhas.append(("mean_fraction", "", result.mean_fraction))
    for nome, valor in (extras or {}).items():
        linhas.append((nome, "", float(valor)))
    linhas.append(("extinction_residual", "", result.extinction_residual))
    linhas.append(("fraction_residual", "", result.fraction_residual))
    return pd.DataFrame(linhas, columns=["metric", "type", "value"])


def rates_frame(matriz: ContactMatrix) -> pd.DataFrame:
    linhas = []
    H = matriz.size
    for h in range(H):
        for k in range(H):
            linhas.append((
                h + 1, k + 1, matriz.rates[h][k],
                matriz.samples[h][k] if matriz.samples is not None else None,
                matriz.ci_low[h][k] if matriz.ci_low is not None else None,
                matriz.ci_high[h][k] if matriz.ci_high is not None else None,
            ))
    return pd.DataFrame(linhas, columns=COLUNAS_TAXAS)


def replications_frame(outcomes: Sequence[SimOutcome], cfg: ScenarioConfig) -> pd.DataFrame:
    linhas = []
    for o in outcomes:
        linhas.extend(o.to_rows(cfg.counts))
    return pd.DataFrame(linhas)


class CsvExporter:
    """Grava os CSVs de um comando numa pasta e registra os caminhos para o manifesto"""

    def __init__(self, pasta, cenario: str):
        self.pasta = Path(pasta)
        self.cenario = cenario
        self.arquivos: List[Path] = []

    def escrever(self, frame: pd.DataFrame, nome: str) -> Path:
        """Temporário na mesma pasta + rename: falha não deixa CSV parcial"""
        destino = self.pasta / nome
        tmp = None
        try:
            self.pasta.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.pasta, prefix=".tmp_", suffix=".csv")
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                frame.to_csv(f, index=False, float_format=FORMATO_FLOAT_CSV, lineterminator="\n")
            os.replace(tmp, destino)
        except OSError as e:
            log.error(f"[CSV] Erro ao gravar {destino}: {e}")
            raise OffloadError(f"não foi possível gravar {destino}: {e}") from e
        finally:
            if tmp and os.path.exists(tmp):
                os.remove(tmp)
        self.arquivos.append(destino)
        log.info(f"[CSV] {destino} ({len(frame)} linhas)")
        return destino

    def exportar_analise(self, cfg: ScenarioConfig, result: AnalyticResult, extras: dict = None) -> Path:
        return self.escrever(analysis_frame(cfg, result, extras), "analyze.csv")
