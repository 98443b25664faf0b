from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("created_at", "kind", "tau", "sample_size", "instance_index", "init_index", "status", "iterations", "final_resval")
    list_filter = ("kind", "status")
    readonly_fields = [f.name for f in ExperimentRun._meta.fields]


admin.site.site_header = "Two-Stage Minimax Solver"
admin.site.site_title = "Minimax Solver"
admin.site.index_title = "Experiment Runs"
