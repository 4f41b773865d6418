# Offload Engine - Modules Package
# Configuração e constantes ficam em config.py, na raiz

from .core_model import (
    CapacityError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    OffloadError,
    ScenarioConfig,
)
from .scenario_manager import load_scenario, save_scenario
