"""Evolution strategies: CMSA-ES niches and the CMA-ES restart baseline."""

from .budget import BudgetExhausted, CountingObjective, as_batch, reflect
from .cmaes import BaselineResult, CmaConfig, CMAES, ConvergedPoint, cma_es_baseline_run, round_integers
from .cmsa import CMSA, EsConfig, EsRunResult, cmsa_es_run

__all__ = [
    "BudgetExhausted", "CountingObjective", "as_batch", "reflect",
    "BaselineResult", "CmaConfig", "CMAES", "ConvergedPoint", "cma_es_baseline_run", "round_integers",
    "CMSA", "EsConfig", "EsRunResult", "cmsa_es_run",
]
