"""
Lab Application Entry Point
Application factory registering the command blueprints, and the click command group.
"""
import logging
import os

from flask import Flask
from flask.cli import FlaskGroup

from config import config
from routes.data_routes import data_bp
from routes.experiment_routes import experiment_bp


def create_app(config_name=None):
    """Application factory pattern"""
    if config_name is None:
        config_name = os.environ.get('CHARM_LAB_ENV', 'development')
    if config_name not in config:
        raise KeyError(f'unknown CHARM_LAB_ENV "{config_name}"')

    app = Flask(__name__)

    # Load configuration
    app.config.from_object(config[config_name])

    # Library modules log through the root logger
    logging.basicConfig(format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logging.getLogger().setLevel(app.config['LOG_LEVEL'])
    app.logger.setLevel(app.config['LOG_LEVEL'])

    # Register blueprints
    app.register_blueprint(data_bp)
    app.register_blueprint(experiment_bp)

    return app


cli = FlaskGroup(create_app=create_app, add_default_commands=False,
                 help='CharmNet harmonization lab: corpus, dataset, train, eval, ablate, rank.')


def main():
    cli(prog_name='charm-lab')


if __name__ == '__main__':
    main()
