"""
Member registration: CreateDO, CreateCO, CreateMO.

Members are pseudonymous. The ledger derives the id from the transaction, and
no network identity of the caller is ever written.
"""
from ..assets import Member, MemberKind
from ..encoding import derive_id
from ..ledger.envelope import TxType
from ..ledger.events import EventType
from .registry import TxContext, contract


def _create_member(ctx: TxContext, kind: MemberKind, name: str, organization: str, how_many: str) -> str:
    member = Member(
        id=derive_id(ctx.tx_id, kind.value),
        kind=kind,
        name=name or None,
        organization=organization or None,
        how_many=how_many or None,
    )
    ctx.put(member)
    ctx.emit(EventType.MEMBER_CREATED, member.key, {"member": member.id, "kind": kind.value})
    return member.id


@contract.transaction(TxType.CREATE_DO, open_to_anyone=True)
def create_do(ctx: TxContext, name: str = "", organization: str = "", how_many: str = "") -> str:
    """Args: [name, organization, how_many], all optional."""
    return _create_member(ctx, MemberKind.DO, name, organization, how_many)


@contract.transaction(TxType.CREATE_CO, open_to_anyone=True)
def create_co(ctx: TxContext, name: str = "", organization: str = "", how_many: str = "") -> str:
    return _create_member(ctx, MemberKind.CO, name, organization, how_many)


@contract.transaction(TxType.CREATE_MO, open_to_anyone=True)
def create_mo(ctx: TxContext, name: str = "", organization: str = "", how_many: str = "") -> str:
    return _create_member(ctx, MemberKind.MO, name, organization, how_many)
