from django.apps import AppConfig


class SecondStageConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'second_stage'
