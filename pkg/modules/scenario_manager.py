"""
Gerenciador de Cenários
Leitura e gravação dos cenários JSON e dos manifestos de execução
"""

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

from config import APP_VERSION, CENARIOS_DIR
from modules.core_model import ConfigurationError, OffloadError, ScenarioConfig, validate_scenario

log = logging.getLogger(__name__)


# ============================================
# GRAVAÇÃO SEGURA
# ============================================

def _salvar_json_seguro(arquivo_path, dados: dict) -> Path:
    """
    SALVA JSON DE FORMA ATÔMICA.
    Grava num temporário da mesma pasta e renomeia; nunca deixa arquivo pela metade.
    """
    arquivo_path = Path(arquivo_path)
    try:
        arquivo_path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=arquivo_path.parent, prefix=".tmp_", suffix=".json")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(dados, f, ensure_ascii=False, indent=2)
            f.write("\n")
        os.replace(tmp, arquivo_path)
    except OSError as e:
        log.error(f"[SALVAR] Erro ao salvar {arquivo_path}: {e}")
        raise OffloadError(f"não foi possível gravar {arquivo_path}: {e}") from e
    return arquivo_path


# ============================================
# CENÁRIOS
# ============================================

def load_scenario(caminho, validar: bool = True) -> ScenarioConfig:
    """
    Carrega um cenário JSON. Erros de sintaxe trazem arquivo, linha e coluna;
    erros de esquema trazem o caminho do campo.
    """
    caminho = Path(caminho)
    try:
        texto = caminho.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"não foi possível ler o cenário: {e.strerror or e}", path=str(caminho)) from e

    try:
        dados = json.loads(texto)
    except json.JSONDecodeError as e:
        raise ConfigurationError(e.msg, path=str(caminho), line=e.lineno, column=e.colno) from e

    try:
        cfg = ScenarioConfig.from_dict(dados)
    except ConfigurationError as e:
        campo = f" [{e.path}]" if e.path else ""
        raise ConfigurationError(f"{e.args[0]}{campo}", path=str(caminho)) from e

    if validar:
        relatorio = validate_scenario(cfg)
        if not relatorio.ok:
            raise ConfigurationError("cenário inválido: " + "; ".join(relatorio.messages()), path=str(caminho))
    log.info(f"[CENARIO] {cfg.name} carregado de {caminho} (H={cfg.num_types}, N={cfg.total_nodes})")
    return cfg


def load_scenario_dict(caminho) -> dict:
    """Dicionário bruto do cenário (usado pelas varreduras)"""
    caminho = Path(caminho)
    try:
        return json.loads(caminho.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigurationError(f"não foi possível ler o cenário: {e.strerror or e}", path=str(caminho)) from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(e.msg, path=str(caminho), line=e.lineno, column=e.colno) from e


def save_scenario(cfg: ScenarioConfig, caminho) -> Path:
    return _salvar_json_seguro(caminho, cfg.to_dict())


def list_scenarios(pasta=CENARIOS_DIR) -> List[Path]:
    """Cenários de exemplo disponíveis"""
    pasta = Path(pasta)
    if not pasta.exists():
        return []
    return sorted(pasta.glob("*.json"))


# ============================================
# MANIFESTO DE EXECUÇÃO
# ============================================

@dataclass
class RunManifest:
    """Tudo o que é preciso para reproduzir os CSVs de um comando"""
    command: str
    scenario: dict
    seed: int
    outputs: List[str] = field(default_factory=list)
    arguments: Dict[str, object] = field(default_factory=dict)
    version: str = APP_VERSION
    started_at: str = field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))
    finished_at: Optional[str] = None
    wall_clock_s: Optional[float] = None

    def finish(self, outputs: List[Path]):
        fim = datetime.now()
        self.outputs = [str(p) for p in outputs]
        self.finished_at = fim.isoformat(timespec="seconds")
        self.wall_clock_s = round((fim - datetime.fromisoformat(self.started_at)).total_seconds(), 3)

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, pasta) -> Path:
        return _salvar_json_seguro(Path(pasta) / f"{self.command}_manifest.json", self.to_dict())
