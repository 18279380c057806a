"""
Command Middleware
Decorators for CLI commands: error-to-exit-status mapping and experiment config resolution.
"""
import json
from functools import wraps

import click
from flask import current_app

from config import default_experiment, load_experiment, parse_set_options
from errors import LabError


def lab_command(f):
    """Decorator turning LabError into a JSON error line on stderr and a nonzero exit"""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return f(*args, **kwargs)
        except (click.exceptions.Exit, click.ClickException):
            raise
        except LabError as e:
            current_app.logger.debug('%s failed: %s', ctx.command.name, e.message)
            click.echo(json.dumps(e.to_dict()), err=True)
            ctx.exit(e.status)
        except Exception as e:
            current_app.logger.exception('%s crashed', ctx.command.name)
            click.echo(json.dumps({'error': 'Internal error', 'details': str(e)}), err=True)
            ctx.exit(1)

    return decorated_function


def experiment_options(f):
    """Decorator adding --config / --set and passing the resolved ExperimentConfig as `experiment`"""
    @click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                  help='JSON file of flat dotted config keys')
    @click.option('--set', 'set_pairs', multiple=True, metavar='KEY=VALUE',
                  help='Override one config key (repeatable)')
    @wraps(f)
    def decorated_function(*args, config_path=None, set_pairs=(), **kwargs):
        base = default_experiment(image_size=current_app.config['IMAGE_SIZE'],
                                  checkpoint_every=current_app.config['CHECKPOINT_EVERY'],
                                  output_root=current_app.config['OUTPUT_ROOT'])
        kwargs['experiment'] = load_experiment(config_path, parse_set_options(set_pairs), base=base)
        return f(*args, **kwargs)

    return decorated_function


def flag_overrides(flags):
    """Dotted-key overrides from command flags that were actually given"""
    return {key: value for key, value in flags.items() if value is not None}
