"""
Error hierarchy for the EFI engine.

Every failure the CLI can report maps to one exception class and one exit code.
"""

from typing import List, Optional


class EFIError(Exception):
    """Base class for all engine failures"""

    exit_code: int = 1


class ConfigError(EFIError):
    """Invalid experiment configuration; carries one message per offending field"""

    exit_code = 2

    def __init__(self, message: str, problems: Optional[List[str]] = None):
        self.problems = list(problems or [])
        detail = "\n".join(f"  {p}" for p in self.problems)
        super().__init__(f"{message}\n{detail}" if detail else message)


class DataError(EFIError):
    """Dataset cannot be read or does not match the model family"""

    exit_code = 3


class DivergenceError(EFIError):
    """A sampler or optimizer update produced a non-finite value"""

    exit_code = 4

    def __init__(
        self,
        message: str,
        iteration: Optional[int] = None,
        last_finite_energy: Optional[float] = None,
    ):
        self.reason = message
        self.iteration = iteration
        self.last_finite_energy = last_finite_energy
        where = f" at iteration {iteration}" if iteration is not None else ""
        last = (
            f" (last finite energy {last_finite_energy:.6g})"
            if last_finite_energy is not None
            else ""
        )
        super().__init__(f"{message}{where}{last}")


class DomainError(EFIError, ValueError):
    """Argument outside the mathematical domain of an operation"""

    exit_code = 2
