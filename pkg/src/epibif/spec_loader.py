"""Load user-defined models from a JSON description.

Expressions use ``+ - * / **``, unary minus, parentheses, ``pow(a, b)``,
numeric literals, state names, parameter names and names from ``constants``.
Anything else is rejected when the file is loaded, not when it is evaluated.

Example::

    {
      "id": "sis",
      "states": ["S", "I"],
      "params": ["beta", "gamma", "mu", "N"],
      "infected": ["I"],
      "constants": {"half": 0.5},
      "rhs": {"S": "mu*N - beta*S*I/N - mu*S + gamma*I",
              "I": "beta*S*I/N - (gamma + mu)*I"},
      "dfe": {"S": "N", "I": "0"},
      "new_infections": {"I": "beta*S*I/N"},
      "transitions": {"I": "(gamma + mu)*I"},
      "nonnegative": [],
      "unit_interval": [],
      "defaults": {"beta": 0.3, "gamma": 0.1, "mu": 0.01, "N": 1.0}
    }
"""

from __future__ import annotations

import ast
import json
import operator
from pathlib import Path

import numpy as np

from .models import ModelError, ModelSystem

__all__ = ["compile_expression", "load_model", "model_from_dict"]

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def compile_expression(text: str, names):
    """Compile ``text`` into ``env -> value``, allowing only ``names`` as identifiers."""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ModelError(f"cannot parse expression {text!r}: {exc.msg}") from None
    allowed = set(names)

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            value = float(node.value)
            return lambda env: value
        if isinstance(node, ast.Name):
            if node.id not in allowed:
                raise ModelError(f"unknown name {node.id!r} in expression {text!r}")
            key = node.id
            return lambda env: env[key]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, lhs, rhs = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda env: op(lhs(env), rhs(env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            op, arg = _UNARY[type(node.op)], build(node.operand)
            return lambda env: op(arg(env))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id == "pow" and len(node.args) == 2 and not node.keywords):
            base, exp = build(node.args[0]), build(node.args[1])
            return lambda env: base(env) ** exp(env)
        raise ModelError(f"unsupported construct {type(node).__name__} in expression {text!r}")

    return build(tree)


def _require(spec, key):
    if key not in spec:
        raise ModelError(f"model file is missing required key {key!r}")
    return spec[key]


def model_from_dict(spec: dict) -> ModelSystem:
    states = tuple(_require(spec, "states"))
    params = tuple(_require(spec, "params"))
    constants = {k: float(v) for k, v in spec.get("constants", {}).items()}
    clash = set(states) & set(params) | (set(states) | set(params)) & set(constants)
    if clash:
        raise ModelError(f"names used twice: {', '.join(sorted(clash))}")
    infected_names = list(_require(spec, "infected"))
    for name in infected_names:
        if name not in states:
            raise ModelError(f"infected variable {name!r} is not a state")
    infected = tuple(states.index(name) for name in infected_names)

    names = set(states) | set(params) | set(constants)
    rhs_src = _require(spec, "rhs")
    if set(rhs_src) != set(states):
        raise ModelError("rhs must give exactly one expression per state")
    rhs_exprs = [compile_expression(rhs_src[s], names) for s in states]
    dfe_exprs = [compile_expression(str(_require(spec, "dfe")[s]), set(params) | set(constants))
                 for s in states]

    def env_for(x, p):
        env = dict(constants)
        env.update(p)
        env.update(zip(states, x))
        return env

    def rhs_fn(x, p):
        env = env_for(x, p)
        shape = np.shape(x[0])
        return np.stack([np.broadcast_to(np.asarray(f(env), dtype=float), shape) for f in rhs_exprs])

    def dfe_fn(p):
        env = dict(constants)
        env.update(p)
        return np.array([float(f(env)) for f in dfe_exprs])

    fv_fn = None
    if "new_infections" in spec or "transitions" in spec:
        new = spec.get("new_infections", {})
        trans = spec.get("transitions", {})
        f_exprs = [compile_expression(str(new.get(s, "0")), names) for s in infected_names]
        v_exprs = [compile_expression(str(trans.get(s, "0")), names) for s in infected_names]

        def fv_fn(x, p):
            env = env_for(x, p)
            shape = np.shape(x[0])
            F = np.stack([np.broadcast_to(np.asarray(f(env), dtype=float), shape) for f in f_exprs])
            V = np.stack([np.broadcast_to(np.asarray(f(env), dtype=float), shape) for f in v_exprs])
            return F, V

    return ModelSystem(
        id=str(spec.get("id", "user")),
        state_names=states,
        param_names=params,
        infected=infected,
        rhs_fn=rhs_fn,
        dfe_fn=dfe_fn,
        fv_fn=fv_fn,
        nonnegative=frozenset(spec.get("nonnegative", ())),
        unit_interval=frozenset(spec.get("unit_interval", ())),
        defaults={k: float(v) for k, v in spec.get("defaults", {}).items()},
        description=str(spec.get("description", "")),
    )


def load_model(path) -> ModelSystem:
    with open(Path(path), encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(spec)
