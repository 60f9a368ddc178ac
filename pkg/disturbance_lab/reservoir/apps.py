from django.apps import AppConfig


class ReservoirConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'reservoir'
    verbose_name = 'Echo-state reservoir'
