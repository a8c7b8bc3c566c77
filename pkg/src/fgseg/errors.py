"""Shared exception types, mapped to CLI exit codes."""


class ContractError(ValueError):
    """An operation was called with arguments violating its contract."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, iteration, lr, batch_ids, loss):
        self.iteration = iteration
        self.lr = lr
        self.batch_ids = list(batch_ids)
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss!r} at iteration {iteration} "
            f"(lr={lr:g}, batch={self.batch_ids})"
        )


class IncompleteEvalError(RuntimeError):
    """An evaluation ran but some requested pairs were missing."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"{len(self.missing)} missing pair(s): {self.missing}")
