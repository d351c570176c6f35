from django.apps import AppConfig


class TiganModelsConfig(AppConfig):
    default_auto_field = 'django.db.models.AutoField'
    name = 'tigan_models'
    verbose_name = 'TIGAN run registry'
