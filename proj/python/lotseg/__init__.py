from _lotseg import (
    ConfigError,
    ContractError,
    DataError,
    FormatError,
    StatsError,
    dice,
    generate_phantom,
    grad_reg,
    minmax_normalize,
    normalize,
    reg_loss,
    region_split,
    run_command,
    u_b_map,
    u_s_map,
    volume_ml,
    warp,
    wilcoxon_signed_rank,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "FormatError",
    "StatsError",
    "dice",
    "generate_phantom",
    "grad_reg",
    "minmax_normalize",
    "normalize",
    "reg_loss",
    "region_split",
    "run_command",
    "u_b_map",
    "u_s_map",
    "volume_ml",
    "warp",
    "wilcoxon_signed_rank",
]
