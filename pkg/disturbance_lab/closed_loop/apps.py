from django.apps import AppConfig


class ClosedLoopConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'closed_loop'
    verbose_name = 'Closed-loop suppression'
