from .server import (
    METHOD_NOT_FOUND,
    UNSUPPORTED_MESSAGE,
    UNSUPPORTED_METHODS,
    RpcDispatcher,
    RpcError,
    logs_bloom,
    rpc_app,
)
from .client import HttpRpcClient, LocalRpcClient, RpcCallError, RpcUnreachable
