"""
Django settings for tigan_site project.

The project hosts the ``topics`` library app behind management commands and
keeps a small sqlite run registry (``tigan_models``). There are no views.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; nothing here is signed or served.
SECRET_KEY = os.environ.get('TIGAN_SECRET_KEY', 'tigan-local-runs-only')

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'tigan_models',
    'topics',
]


# Run registry
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('TIGAN_REGISTRY', BASE_DIR / 'tigan_runs.sqlite3'),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/4.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.AutoField'


# Logging
# https://docs.djangoproject.com/en/4.2/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'topics': {
            'handlers': ['console'],
            'level': os.environ.get('TIGAN_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Documented default for every config key, one dict per subcommand.
# Precedence: these < the [section] of a --config INI file < command-line flags.

TIGAN_DEFAULTS = {
    'synth': {
        'output': '',
        'planted': '',
        'topics': 4,
        'words_per_topic': 40,
        'shared_words': 80,
        'docs_per_topic': 500,
        'doc_length': 20,
        'noise_rate': 0.2,
        'seed': 0,
    },
    'preprocess': {
        'corpus': '',
        'output_dir': '',
        'vocab_cap': 3000,
        'stopwords': 'english',
        'lowercase': True,
        'min_token_length': 2,
    },
    'embed': {
        'vocab': '',
        'output': '',
        'corpus': '',
        'source': '',
        'stopwords': 'english',
        'lowercase': True,
        'min_token_length': 2,
        'dim': 100,
        'window': 5,
        'negatives': 5,
        'epochs': 5,
        'lr': 0.025,
        'batch_size': 256,
        'seed': 0,
    },
    'train': {
        'bow': '',
        'vocab': '',
        'embeddings': '',
        'output_dir': '',
        'num_topics': 4,
        'z_dim': 200,
        'lambda_mi': 0.1,
        'alpha_clip': 0.15,
        'lambda_gp': 10.0,
        'critic_steps': 5,
        'batch_size': 64,
        'epochs': 20,
        'seed': 0,
        'q_variant': 'sif',
        'finetune_embeddings': False,
        'autoencoder': True,
        'code_prior': 'uniform',
        'g_hidden': '1000,1000,1000',
        'd_hidden': '500,500',
        'e_hidden': '500',
        'embedding_dim': 100,
        'lr': 0.0005,
        'beta1': 0.5,
        'beta2': 0.999,
        'checkpoint_every': 1,
    },
    'eval': {
        'checkpoint': '',
        'bow': '',
        'vocab': '',
        'output': '',
        'planted': '',
        'top_n': 10,
        'noise_samples': 10,
        'top_m': 50,
        'seed': 0,
    },
    'baseline': {
        'bow': '',
        'vocab': '',
        'embeddings': '',
        'output': '',
        'num_topics': 4,
        'restarts': 10,
        'max_iter': 300,
        'tol': 1e-6,
        'seed': 0,
        'use_sif': False,
    },
}
