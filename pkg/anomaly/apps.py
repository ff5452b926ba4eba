from django.apps import AppConfig


class AnomalyConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'anomaly'
    verbose_name = 'Online video anomaly detection'
