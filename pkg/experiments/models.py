from django.db import models

from experiments.data import ExperimentKind
from ippgda.data import RunStatus


class ExperimentRun(models.Model):
    """
    Append-only ledger of solver runs, one row per launched run.
    """
    kind = models.CharField(max_length=10, choices=ExperimentKind.choices)
    status = models.CharField(max_length=12, choices=RunStatus.choices)

    tau = models.FloatField()
    lb = models.FloatField()
    ub = models.FloatField()
    sample_size = models.PositiveIntegerField()
    instance_index = models.PositiveIntegerField(default=0)
    init_index = models.PositiveIntegerField(null=True, blank=True)

    master_seed = models.BigIntegerField(default=0)
    instance_seed = models.BigIntegerField(null=True, blank=True)
    scenario_seed = models.BigIntegerField(null=True, blank=True)
    init_seed = models.BigIntegerField(null=True, blank=True)

    iterations = models.PositiveIntegerField(default=0)
    final_resval = models.FloatField(null=True, blank=True)
    objective = models.FloatField(null=True, blank=True)
    psi_inner_max = models.FloatField(null=True, blank=True)
    resampled = models.PositiveIntegerField(default=0)  # indefinite scenario draws thrown away

    trace_path = models.CharField(max_length=500, blank=True)
    error = models.TextField(blank=True)
    elapsed_seconds = models.FloatField(default=0.0)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        indexes = [
            models.Index(fields=["created_at"]),
            models.Index(fields=["kind", "status"]),
        ]

    def __str__(self) -> str:
        return f"{self.kind} tau={self.tau:g} N={self.sample_size} #{self.instance_index}: {self.status}"
