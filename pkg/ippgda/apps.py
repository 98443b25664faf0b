from django.apps import AppConfig


class IppgdaConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'ippgda'
    verbose_name = 'Proximal gradient descent-ascent'
