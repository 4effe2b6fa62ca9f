# -*- coding: utf-8 -*-
#
#  Copyright (C) 2026 diffblend contributors
#
#  diffblend - 3D CT reconstruction by blending slice-patch scores
#
#  This program is free software; you can redistribute it and/or
#  modify it under the terms of the GNU General Public License
#  as published by the Free Software Foundation; either version 2
#  of the License, or (at your option) any later version.
#
#  This program is distributed in the hope that it will be useful,
#  but WITHOUT ANY WARRANTY; without even the implied warranty of
#  MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#  GNU General Public License for more details.

#  You should have received a copy of the GNU General Public License
#  along with this program; if not, write to the Free Software
#  Foundation, Inc., 51 Franklin Street, Fifth Floor, Boston,
#  MA  02110-1301, USA.

"""
Command line for phantom generation, simulation, training,
reconstruction, evaluation and the analytic self-checks.

Every command prints its resolved configuration; library errors are turned
into the exit code they carry (2 config, 3 input mismatch, 4 numeric, 1
verification).
"""
import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

import diffblend
from diffblend import benchmark, ctoperator, formats, selfcheck
from diffblend.errors import ConfigError, DiffBlendError, InputMismatch
from diffblend.metrics import evaluate, write_report
from diffblend.phantom import family_spec, load_phantom_spec, \
    make_phantom, phantom_family
from diffblend.training import TrainConfig, train_blend, train_blendpp
from diffblend.utils.config import RunConfig

__author__ = 'diffblend contributors'
__all__ = ['main', 'build_parser']

logger = logging.getLogger(__name__)


def _require(*paths):
    for path in paths:
        if path and not os.path.isfile(path):
            raise ConfigError(path, "Input file [%s] does not exist" % path)


_CHECKPOINT_FLAGS = (
    ("checkpoint", "recon.checkpoint"),
    ("checkpoint_joint", "recon.checkpoint_joint"),
    ("checkpoint_conditional", "recon.checkpoint_conditional"),
    ("checkpoint_slice", "recon.checkpoint_slice"))


def _checkpoint_overrides(args):
    return {key: getattr(args, dest) for dest, key in _CHECKPOINT_FLAGS}


def _checkpoint_paths(args):
    return [getattr(args, dest) for dest, _ in _CHECKPOINT_FLAGS]


def _resolve(args):
    """Defaults, then the config file, then command line flags"""
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.set("seed", args.seed)
    if args.threads is not None:
        config.set("threads", args.threads)
    for key, value in getattr(args, "overrides", {}).items():
        if value is not None:
            config.set(key, value)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "--set expects key=value, got [%s]"
                              % item)
        config.set(key.strip(), value.strip())
    print("# diffblend %s %s" % (diffblend.VERSION, args.command))
    print(config.echo())
    return config


def _report_file(path):
    print("Wrote {} (sha256 {})".format(path, formats.checksum(path)))


def _phantom_spec(args):
    spec = load_phantom_spec(args.phantom or benchmark.desk_spec_path())
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    return spec


def cmd_phantom(args):
    _require(args.spec)
    config = _resolve(args)
    spec = load_phantom_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=config["seed"])
    volume = make_phantom(spec)
    formats.write_volume(args.out, volume)
    print("Phantom {}x{}x{}".format(volume.width, volume.height,
                                    volume.depth))
    _report_file(args.out)
    return 0


def cmd_project(args):
    _require(args.volume)
    args.overrides = {"geometry.views": args.views,
                      "geometry.mode": args.mode,
                      "geometry.noise_std": args.noise}
    config = _resolve(args)
    volume = formats.read_volume(args.volume)
    g = benchmark.geometry_from(config, config["geometry.views"],
                                volume.width, volume.height)
    sinogram = ctoperator.project(volume, g)
    rng = np.random.default_rng([config["seed"], g.n_views])
    sinogram = ctoperator.add_measurement_noise(
        sinogram, config["geometry.noise_std"], rng)
    formats.write_sinogram(args.out, sinogram, g, volume.width,
                           volume.height)
    _report_file(args.out)
    return 0


def _load_sinogram(path, geometry_path=None):
    geometry_path = geometry_path or formats.geometry_path(path)
    _require(path, geometry_path)
    sinogram = formats.read_sinogram(path)
    g, width, height = formats.read_geometry(geometry_path)
    ctoperator.check_sinogram(sinogram, g)
    if width is None or height is None:
        size = ctoperator.image_size_for(g)
        width, height = width or size, height or size
    return sinogram, g, width, height


def cmd_fbp(args):
    _resolve(args)
    sinogram, g, width, height = _load_sinogram(args.sinogram, args.geometry)
    volume = ctoperator.fbp(sinogram, g, height, width)
    formats.write_volume(args.out, volume)
    _report_file(args.out)
    return 0


def cmd_train(args):
    args.overrides = {"train.mode": args.mode, "train.epochs": args.epochs,
                      "train.steps_per_epoch": args.steps}
    config = _resolve(args)
    _require(args.phantom, *(args.volumes or []))
    sched = benchmark.schedule_from(config)
    train_config = TrainConfig.from_run_config(config)
    if args.volumes:
        volumes = [formats.read_volume(p) for p in args.volumes]
    else:
        spec = _phantom_spec(args)
        volumes = phantom_family(
            family_spec(spec, benchmark.FAMILY_SEED_OFFSET),
            config["prior.family_size"])
    loss_path = args.loss or os.path.splitext(args.out)[0] + "_loss.csv"
    if train_config.mode == "joint":
        result = train_blendpp(volumes, train_config, sched, loss_path)
    else:
        result = train_blend(volumes, train_config, sched, loss_path)
    formats.write_checkpoint(args.out, result.params)
    _report_file(args.out)
    _report_file(loss_path)
    return 0


def _case_from_files(args, config):
    sinogram, g, width, height = _load_sinogram(args.sinogram, args.geometry)
    truth = None
    if args.ground_truth:
        _require(args.ground_truth)
        truth = formats.read_volume(args.ground_truth)
        expected = (sinogram.depth, height, width)
        if truth.shape != expected:
            raise InputMismatch("ground truth vs sinogram",
                                [("shape", expected, truth.shape)])
    spec = _phantom_spec(args)
    spec = replace(spec, width=width, height=height, depth=sinogram.depth)
    family = phantom_family(family_spec(spec, benchmark.FAMILY_SEED_OFFSET),
                            config["prior.family_size"])
    return benchmark.DeskCase(truth, family, g, sinogram, height, width)


def cmd_reconstruct(args):
    args.overrides = {"recon.method": args.method,
                      "geometry.views": args.views,
                      "recon.nfe": args.nfe,
                      "recon.backend": args.backend,
                      "recon.ablation": args.ablation}
    args.overrides.update(_checkpoint_overrides(args))
    config = _resolve(args)
    _require(*_checkpoint_paths(args), args.phantom)
    if args.sinogram:
        case = _case_from_files(args, config)
    else:
        case = benchmark.make_case(config, _phantom_spec(args))
    method = config["recon.method"]
    if method not in benchmark.ALL_METHODS:
        raise ConfigError("recon.method", "Unknown method [%s]" % method)
    volume = benchmark.run_method(case, config, method,
                                  diagnostics=args.diagnostics)
    formats.write_volume(args.out, volume)
    _report_file(args.out)
    if case.truth is not None:
        report = evaluate(volume, case.truth, config["data_range"])
        print("PSNR {:.2f} dB".format(report.psnr))
        if args.metrics:
            write_report(args.metrics, [report])
            _report_file(args.metrics)
    return 0


def cmd_eval(args):
    _require(args.volume, args.reference)
    config = _resolve(args)
    volume = formats.read_volume(args.volume)
    reference = formats.read_volume(args.reference)
    if volume.shape != reference.shape:
        raise InputMismatch("volume vs reference",
                            [("shape", reference.shape, volume.shape)])
    report = evaluate(volume, reference, config["data_range"])
    for name, value in report.as_row().items():
        print("{:>14} {}".format(name, value))
    if args.out:
        write_report(args.out, [report])
        _report_file(args.out)
    return 0


def cmd_oracle_check(args):
    config = _resolve(args)
    results = selfcheck.run_suites(config["seed"], args.inject_fault or (),
                                   args.suite)
    print(selfcheck.format_table(results))
    selfcheck.verify(results)
    return 0


def cmd_benchmark(args):
    args.overrides = {"recon.backend": args.backend}
    args.overrides.update(_checkpoint_overrides(args))
    config = _resolve(args)
    _require(*_checkpoint_paths(args), args.phantom)
    spec = _phantom_spec(args)
    modes = ("sparse", "limited") if args.limited else ("sparse",)
    results = benchmark.run_benchmark(
        config, views=args.views, modes=modes, methods=args.methods,
        cross_frequencies=args.cross_frequency, nfes=args.nfe, out=args.out,
        spec=spec)
    for row, report in results:
        print("{method:>12} {mode:>8} {views:>3} f={cross_frequency} "
              "nfe={nfe}".format(**row) + " PSNR {:.2f}".format(report.psnr))
    _report_file(args.out)
    return 0


def _add_checkpoint_flags(p):
    p.add_argument("--checkpoint", dest="checkpoint",
                   help="Checkpoint for every network kind")
    p.add_argument("--checkpoint-joint", dest="checkpoint_joint",
                   help="Joint patch network (blendpp)")
    p.add_argument("--checkpoint-conditional", dest="checkpoint_conditional",
                   help="Conditional slice network (blend)")
    p.add_argument("--checkpoint-slice", dest="checkpoint_slice",
                   help="Single-slice network (ztv, independent)")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", action="store", dest="config",
                        help="key = value run config file")
    common.add_argument("--seed", action="store", type=int, dest="seed",
                        help="Seed for all randomness")
    common.add_argument("--threads", action="store", type=int,
                        dest="threads", help="Worker threads for patch "
                                             "score evaluation")
    common.add_argument("--set", action="append", dest="set",
                        metavar="KEY=VALUE",
                        help="Override one config key, may be repeated")
    common.add_argument("-d", "--debug", action="store_true", dest="debug",
                        help="Enable debug output")

    parser = argparse.ArgumentParser(prog="diffblend")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common],
                       help="Write a phantom volume from a YAML spec")
    p.add_argument("spec")
    p.add_argument("out")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("project", parents=[common],
                       help="Simulate a sinogram of a volume")
    p.add_argument("volume")
    p.add_argument("out")
    p.add_argument("--views", type=int, dest="views")
    p.add_argument("--mode", choices=("sparse", "limited"), dest="mode")
    p.add_argument("--noise", type=float, dest="noise",
                   help="Standard deviation of additive noise")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("fbp", parents=[common],
                       help="Filtered backprojection of a sinogram")
    p.add_argument("sinogram")
    p.add_argument("out")
    p.add_argument("--geometry", dest="geometry",
                   help="Geometry file, defaults to <sinogram>.geom")
    p.set_defaults(func=cmd_fbp)

    p = sub.add_parser("train", parents=[common],
                       help="Train a slice-patch denoiser")
    p.add_argument("out")
    p.add_argument("--mode", choices=("joint", "conditional"), dest="mode")
    p.add_argument("--epochs", type=int, dest="epochs")
    p.add_argument("--steps", type=int, dest="steps",
                   help="Iterations per epoch")
    p.add_argument("--phantom", dest="phantom",
                   help="Phantom spec for the training family")
    p.add_argument("--volumes", nargs="+", dest="volumes",
                   help="BVOL1 training volumes instead of a family")
    p.add_argument("--loss", dest="loss", help="Loss history CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", parents=[common],
                       help="Reconstruct a volume from a sinogram")
    p.add_argument("out")
    p.add_argument("--method", choices=benchmark.ALL_METHODS,
                   dest="method")
    p.add_argument("--views", type=int, dest="views",
                   help="Views of the bundled desk benchmark")
    p.add_argument("--sinogram", dest="sinogram",
                   help="BSIN1 input instead of the desk benchmark")
    p.add_argument("--geometry", dest="geometry")
    p.add_argument("--ground-truth", dest="ground_truth")
    p.add_argument("--phantom", dest="phantom",
                   help="Phantom spec for the oracle prior family")
    p.add_argument("--backend", choices=("oracle", "denoiser"),
                   dest="backend")
    _add_checkpoint_flags(p)
    p.add_argument("--nfe", type=int, dest="nfe")
    p.add_argument("--ablation", dest="ablation",
                   choices=("none", "fixed-partition", "adjacency-only",
                            "ztv"))
    p.add_argument("--metrics", dest="metrics", help="MetricReport CSV")
    p.add_argument("--diagnostics", dest="diagnostics",
                   help="Per-step diagnostics CSV")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", parents=[common],
                       help="Compare a volume against a reference")
    p.add_argument("volume")
    p.add_argument("reference")
    p.add_argument("--out", dest="out", help="MetricReport CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle-check", parents=[common],
                       help="Run the analytic verification suites")
    p.add_argument("--suite", action="append", dest="suite",
                   choices=[s[0] for s in selfcheck.SUITES])
    p.add_argument("--inject-fault", action="append", dest="inject_fault",
                   choices=selfcheck.FAULTS, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("benchmark", parents=[common],
                       help="Score every method on the desk benchmark")
    p.add_argument("out")
    p.add_argument("--views", type=int, nargs="+", dest="views",
                   default=[4, 6, 8])
    p.add_argument("--limited", action="store_true", dest="limited",
                   help="Also run limited-angle (90 degree) geometries")
    p.add_argument("--methods", nargs="+", dest="methods",
                   choices=benchmark.ALL_METHODS,
                   default=list(benchmark.ALL_METHODS))
    p.add_argument("--cross-frequency", type=int, nargs="+",
                   dest="cross_frequency")
    p.add_argument("--nfe", type=int, nargs="+", dest="nfe")
    p.add_argument("--phantom", dest="phantom")
    p.add_argument("--backend", choices=("oracle", "denoiser"),
                   dest="backend")
    _add_checkpoint_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    """Main diffblend application"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.debug:
        logging.basicConfig(level=logging.DEBUG)
    else:
        logging.basicConfig(level=logging.INFO)

    try:
        return args.func(args)
    except DiffBlendError as e:
        print("Error: {}".format(e))
        return e.exit_code
    except OSError as e:
        print("Error: {}".format(e))
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
