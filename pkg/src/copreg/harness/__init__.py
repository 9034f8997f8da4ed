"""Configuration, CSV ingestion and the table-producing experiment programs."""
from .config import RunConfig, load_config
from .csvio import read_longitudinal_csv, write_longitudinal_csv
from .experiments import cmd_asymlimit, cmd_fit, cmd_rectprob, cmd_simstudy
from .report import Table

__all__ = ["RunConfig", "Table", "cmd_asymlimit", "cmd_fit", "cmd_rectprob", "cmd_simstudy", "load_config",
           "read_longitudinal_csv", "write_longitudinal_csv"]
