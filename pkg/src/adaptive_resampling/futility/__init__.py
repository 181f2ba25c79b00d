from .bradley_terry import BtFit, WinTable, bt_eliminate, bt_fit, tabulate_wins
from .gls import AnalysisSkipped, GlsFit, gls_eliminate, gls_fit

__all__ = [
    "AnalysisSkipped",
    "BtFit",
    "GlsFit",
    "WinTable",
    "bt_eliminate",
    "bt_fit",
    "gls_eliminate",
    "gls_fit",
    "tabulate_wins",
]
