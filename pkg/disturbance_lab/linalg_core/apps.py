from django.apps import AppConfig


class LinalgCoreConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'linalg_core'
    verbose_name = 'Linear algebra core'
