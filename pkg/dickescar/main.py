"""Main entry point for the Dicke scar toolkit"""

import argparse
import asyncio
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from dickescar import __version__
from dickescar.config import get_settings
from dickescar.controllers import OccupationController, OrbitController, SpectrumController
from dickescar.errors import ConfigError, NUMERICAL_CODES
from dickescar.models import RunConfig
from dickescar.services import CacheService, OutputService, telemetry

logger = logging.getLogger(__name__)
settings = get_settings()

COMMANDS = {
    'spectrum': (SpectrumController, 'handle_spectrum'),
    'occupations': (OccupationController, 'handle_occupations'),
    'husimi-grid': (OccupationController, 'handle_husimi_grid'),
    'orbit-hunt': (OrbitController, 'handle_orbit_hunt'),
    'scar-measure': (OrbitController, 'handle_scar_measure'),
    'dos': (SpectrumController, 'handle_dos'),
}

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# argparse dest -> RunConfig field
FLAG_FIELDS = {
    'j': 'j', 'gamma': 'gamma', 'omega': 'omega', 'omega0': 'omega0', 'window': 'window',
    'alpha': 'alphas', 'samples': 'samples', 'seed': 'seed', 'grid': 'grid',
    'cache_dir': 'cache_dir', 'out_dir': 'out_dir', 'threads': 'threads', 'states': 'states',
    'orbits': 'orbits', 'parity': 'parity', 'n_max': 'n_max', 'images': 'images',
    'random_states': 'random_states',
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="key=value run configuration file")
    common.add_argument('--j', type=float, help="pseudo-spin length j = N/2")
    common.add_argument('--gamma', type=float, help="atom-field coupling")
    common.add_argument('--omega', type=float, help="field frequency")
    common.add_argument('--omega0', type=float, help="atomic frequency")
    common.add_argument('--window', nargs=2, type=float, metavar=('LO', 'HI'),
                        help="energy window in units of j, e.g. --window -0.65 -0.35")
    common.add_argument('--alpha', help="comma separated moment orders")
    common.add_argument('--samples', type=int, help="Monte Carlo shell points")
    common.add_argument('--seed', type=int, help="master random seed")
    common.add_argument('--grid', type=int, help="cells per axis of projected grids")
    common.add_argument('--cache-dir', help=f"cache root (default: $DICKESCAR_CACHE_DIR or {settings.CACHE_DIR})")
    common.add_argument('--out-dir', help="directory for result files")
    common.add_argument('--threads', type=int, help="worker threads")
    common.add_argument('--states', help="state selectors: center, E<k>, <k>, R<seed>")
    common.add_argument('--orbits', help="orbit ids from the catalog")
    common.add_argument('--parity', help="+1, -1 or both")
    common.add_argument('--n-max', type=int, help="boson cutoff (default: heuristic)")
    common.add_argument('--random-states', type=int, help="random states in the occupation baseline")
    common.add_argument('--images', action='store_true', default=None, help="also write PNG images of grids")
    common.add_argument('--log-level', default=None, help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(
        prog=settings.SERVICE_NAME,
        description="Phase-space localization and quantum scars in the Dicke model"
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('spectrum', parents=[common], help="diagonalize, filter and cache the spectrum")
    sub.add_parser('occupations', parents=[common], help="Renyi occupation curves and random baseline")
    sub.add_parser('husimi-grid', parents=[common], help="projected Husimi moment grids")
    sub.add_parser('orbit-hunt', parents=[common], help="periodic orbits scarring the selected states")
    sub.add_parser('scar-measure', parents=[common], help="scarring measure for catalog orbits")
    sub.add_parser('dos', parents=[common], help="semiclassical density of states")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """File values first, then command-line flags"""
    overrides = {field: getattr(args, dest) for dest, field in FLAG_FIELDS.items()}
    return RunConfig.from_file(args.config, **overrides)


def exit_code(envelope: Dict[str, Any]) -> int:
    if envelope.get('success'):
        return EXIT_OK
    code = envelope.get('error', {}).get('code')
    if code == ConfigError.code:
        return EXIT_CONFIG
    if code in NUMERICAL_CODES:
        return EXIT_NUMERICAL
    return EXIT_INTERNAL


async def run_command(command: str, config: RunConfig) -> Dict[str, Any]:
    """Run one subcommand; the manifest record is written even when it fails"""
    config.ensure_dirs()
    config_hash = config.config_hash()
    cache = CacheService(config.cache_dir)
    output = OutputService(config.out_dir, config_hash, images=config.images)
    controller_cls, method = COMMANDS[command]
    controller = controller_cls(config, cache, output)

    inputs = {**config.physics_dict(), 'config_hash': config_hash}
    with telemetry.command_run(command, config.out_dir, inputs) as record:
        envelope = await getattr(controller, method)()
        if envelope['success']:
            record['result'] = envelope['data']
        else:
            record['outcome'] = 'error'
            record['error'] = envelope['error']
    return envelope


async def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command, return the process exit code"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.LOG_LEVEL).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    try:
        config = load_config(args)
        envelope = await run_command(args.command, config)
    except ConfigError as e:
        logger.error(f"Configuration error: {e.message}")
        return EXIT_CONFIG

    if envelope['success']:
        print(json.dumps(envelope['data'], indent=2, default=str))
    else:
        print(json.dumps(envelope['error'], indent=2), file=sys.stderr)
    return exit_code(envelope)


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
