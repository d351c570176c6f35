from django.apps import AppConfig


class TopicsConfig(AppConfig):
    default_auto_field = 'django.db.models.AutoField'
    name = 'topics'
    verbose_name = 'Topic GAN library'
