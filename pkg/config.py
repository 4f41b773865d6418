"""
Configurações do Offload Engine
Motor de Disseminação Cooperativa | Offloading de Tráfego Celular
"""

import logging
import os
from pathlib import Path

# Diretórios
BASE_DIR = Path(__file__).parent
DATA_DIR = BASE_DIR / "data"
CENARIOS_DIR = DATA_DIR / "cenarios"
RESULTADOS_DIR = BASE_DIR / "resultados"

# Configurações do sistema
APP_NAME = "Offload Engine"
APP_VERSION = "1.0.0"

# Variáveis de ambiente
ENV_THREADS = "OFFLOAD_THREADS"
ENV_LOG_LEVEL = "OFFLOAD_LOG_LEVEL"

# ============================================
# SOLVERS ANALÍTICOS
# ============================================

# Iteração monótona (extinção e frações)
TOL_ITERACAO = 1e-13
MAX_ITERACOES = 100_000
MAX_PASSOS_NEWTON = 200
PASSOS_POLIMENTO = 5

# Faixa (1 - eps, 1 + eps] tratada como subcrítica
TOL_CRITICIDADE = 1e-9

# Raio espectral (iteração da potência)
TOL_ESPECTRAL = 1e-12
MAX_ITERACOES_ESPECTRAL = 20_000

# Lambert-W (Halley)
MAX_ITERACOES_LAMBERT = 100

# Oráculo de ramificação
RAMIFICACAO_POPULACAO_MAX = 1_000
RAMIFICACAO_GERACOES_MAX = 500

# ============================================
# SIMULAÇÃO
# ============================================

REPLICACOES_PADRAO = 500
LIMIAR_ESPALHAMENTO = 0.1           # fração de N para "spread out"
TROCA_DIRECAO_MEDIA_S = 60.0        # épocas de troca de direção (exponencial)
PASSO_MAXIMO_S = 0.1                # dt = min(0.1 s, r0 / (4 v_max))
AQUECIMENTO_PADRAO_S = 600.0
DURACAO_ESTIMATIVA_PADRAO_S = 20_000.0
NIVEL_CONFIANCA = 0.95

# Modos de execução
MODOS_SIMULACAO = ("independent", "shared")
MOTORES_SIMULACAO = ("contact", "spatial")
CODIFICACOES = ("erasure_coded", "uncoded")

# Colunas dos CSVs (esquemas congelados, ver GUIA_FORMATOS.md)
COLUNAS_CARGA = ["beta", "Y", "total", "coding"]
COLUNAS_TAXAS = ["type_h", "type_k", "rate_hz", "samples", "ci_low", "ci_high"]
FORMATO_FLOAT_CSV = "%.10g"


def threads_padrao() -> int:
    """Número de processos para lotes de replicações (OFFLOAD_THREADS)"""
    try:
        return max(1, int(os.environ.get(ENV_THREADS, "1")))
    except ValueError:
        return 1


def configurar_logging(nivel: str = None) -> None:
    """Configura o logging do processo (uma vez, pelo CLI ou pelos testes)"""
    nivel = (nivel or os.environ.get(ENV_LOG_LEVEL, "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, nivel, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


# Formatação de valores
def format_number(value, decimals=6):
    """Formata número para as tabelas do terminal"""
    if value is None or (isinstance(value, float) and str(value) == 'nan'):
        return "-"
    try:
        return f"{value:,.{decimals}f}"
    except (TypeError, ValueError):
        return "-"


def format_percent(value, decimals=1):
    """Formata valor como percentual"""
    if value is None or (isinstance(value, float) and str(value) == 'nan'):
        return "-"
    try:
        return f"{value * 100:,.{decimals}f}%"
    except (TypeError, ValueError):
        return "-"
