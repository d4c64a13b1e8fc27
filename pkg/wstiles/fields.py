""" Field schemas for the fixed binary layouts written by wstiles. Every layout is an ordered
list of named little-endian fields so the byte order and widths live in exactly one place.
"""
import enum
import struct
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Type, Union

from .errors import FieldError
from . import mappings


class Field(object):
    __slots__ = ('_name', '_struct')

    def __init__(self, name: str, code: str) -> None:
        """A single fixed width field. The code is a struct format character, always packed
        little-endian with no implicit padding.

        Args:
            name (str): The name of the field
            code (str): struct code such as `Q`, `I`, `H`, `B`, `d` or `4s`
        Raises:
            ValueError: If the code is not a valid struct format.
        """
        self._name = name
        try:
            self._struct = struct.Struct('<' + code)
        except struct.error as err:
            raise ValueError(f'bad struct code `{code}` for field `{name}`') from err

    @property
    def name(self) -> str:
        return self._name

    @property
    def size(self) -> Optional[int]:
        """Encoded size in bytes, None if the field is variable length.

        Returns:
            Optional[int]: byte width
        """
        return self._struct.size

    def pack(self, value: Any) -> bytes:
        """Encode a value.

        Args:
            value (Any): The python value.

        Raises:
            FieldError: If the value does not fit the field.

        Returns:
            bytes: encoded bytes
        """
        try:
            return self._struct.pack(value)
        except struct.error as err:
            raise FieldError(f'`{self._name}`: cannot pack {value!r}: {err}') from err

    def unpack(self, buf: Union[bytes, memoryview], offset: int) -> Tuple[Any, int]:
        """Decode the field at offset.

        Args:
            buf (Union[bytes, memoryview]): source buffer
            offset (int): position of the field

        Raises:
            FieldError: If the buffer is too short.

        Returns:
            Tuple[Any, int]: the value and the offset just past it.
        """
        end = offset + self._struct.size
        if end > len(buf):
            raise FieldError(f'`{self._name}`: truncated at offset {offset}')
        return self._struct.unpack_from(buf, offset)[0], end


class ConstantField(Field):
    __slots__ = ('_name', '_struct', '_expected')

    def __init__(self, name: str, code: str, expected: Any) -> None:
        """A field that always holds the same value: magic numbers, flags and reserved bytes.
        The value given to pack is ignored.

        Args:
            name (str): The name of the field
            code (str): struct code
            expected (Any): The only accepted value
        """
        super().__init__(name, code)
        self._expected = expected

    @property
    def expected(self) -> Any:
        return self._expected

    def pack(self, value: Any=None) -> bytes:
        return super().pack(self._expected)

    def unpack(self, buf: Union[bytes, memoryview], offset: int) -> Tuple[Any, int]:
        value, end = super().unpack(buf, offset)
        if value != self._expected:
            raise FieldError(f'`{self._name}`: expected {self._expected!r}, found {value!r}')
        return value, end


class StringField(Field):
    __slots__ = ('_name', '_struct')

    def __init__(self, name: str) -> None:
        """UTF-8 text prefixed with its u16 byte length.

        Args:
            name (str): The name of the field
        """
        super().__init__(name, 'H')

    @property
    def size(self) -> Optional[int]:
        return None

    def pack(self, value: str) -> bytes:
        raw = value.encode('utf-8')
        if len(raw) > 0xFFFF:
            raise FieldError(f'`{self._name}`: {len(raw)} bytes exceeds the u16 length prefix')
        return self._struct.pack(len(raw)) + raw

    def unpack(self, buf: Union[bytes, memoryview], offset: int) -> Tuple[str, int]:
        length, start = super().unpack(buf, offset)
        end = start + length
        if end > len(buf):
            raise FieldError(f'`{self._name}`: string of {length} bytes truncated')
        try:
            return bytes(buf[start:end]).decode('utf-8'), end
        except UnicodeDecodeError as err:
            raise FieldError(f'`{self._name}`: invalid utf-8') from err


class CategoricalField(Field):
    __slots__ = ('_name', '_struct', '_enum', '_mapping', '_reverse')

    def __init__(self, name: str, code: str, enum_type: Type[enum.Enum], mapping: Dict[str, int]) -> None:
        """ An enum stored as an integer code. The mapping is keyed by member name, see `mappings`.

        Args:
            name (str): The name of the field
            code (str): struct code for the stored integer
            enum_type (Type[enum.Enum]): The enum the codes decode to.
            mapping (Dict[str, int]): member name -> stored code
        """
        super().__init__(name, code)
        self._enum = enum_type
        self._mapping = mapping
        self._reverse = {v: k for k, v in mapping.items()}

    def pack(self, value: enum.Enum) -> bytes:
        try:
            return super().pack(self._mapping[value.name])
        except (KeyError, AttributeError) as err:
            raise FieldError(f'`{self._name}`: {value!r} is not a {self._enum.__name__}') from err

    def unpack(self, buf: Union[bytes, memoryview], offset: int) -> Tuple[enum.Enum, int]:
        code, end = super().unpack(buf, offset)
        if code not in self._reverse:
            raise FieldError(f'`{self._name}`: unknown code {code}')
        return self._enum[self._reverse[code]], end


class Block(object):
    __slots__ = ('_name', '_fields')

    def __init__(self,
        name: str,
        fields: Union[Callable[..., List[Field]], List[Field]]) -> None:
        """An ordered run of fields. Values travel as dictionaries keyed by field name.

        Args:
            name (str): The block name.
            fields (Union[Callable[..., List[Field]], List[Field]]): Either a list of fields
                or a callable that returns one.
        """
        self._name = name
        if callable(fields):
            fields = fields()
        self._fields = fields

    @property
    def name(self) -> str:
        return self._name

    @property
    def size(self) -> Optional[int]:
        """Encoded size when every field is fixed width, else None."""
        sizes = [f.size for f in self._fields]
        if any(s is None for s in sizes):
            return None
        return sum(sizes)

    def fields(self):
        for f in self._fields:
            yield f

    def pack(self, values: Mapping[str, Any]) -> bytes:
        """Encode every field in order. Constant fields do not need a value.

        Args:
            values (Mapping[str, Any]): field name -> value

        Raises:
            FieldError: If a value is missing or does not fit.

        Returns:
            bytes: the encoded block
        """
        out = []
        for f in self._fields:
            if isinstance(f, ConstantField):
                out.append(f.pack())
                continue
            if f.name not in values:
                raise FieldError(f'{self._name}: missing value for `{f.name}`')
            out.append(f.pack(values[f.name]))
        return b''.join(out)

    def unpack(self, buf: Union[bytes, memoryview], offset: int=0) -> Tuple[Dict[str, Any], int]:
        """Decode the block starting at offset.

        Returns:
            Tuple[Dict[str, Any], int]: the values by name (constants excluded) and the end offset.
        """
        values = {}
        for f in self._fields:
            value, offset = f.unpack(buf, offset)
            if not isinstance(f, ConstantField):
                values[f.name] = value
        return values, offset


def header_fields() -> List[Field]:
    """Container header, 16 bytes."""
    return [
        ConstantField('magic', '4s', b'WSTC'),
        Field('format_version', 'H'),
        ConstantField('flags', 'H', 0),
        ConstantField('reserved', '8s', b'\x00' * 8),
    ]


def meta_fields() -> List[Field]:
    """Meta block at the start of the index section: image metadata, chunk grid and variable count."""
    from .container import Stain   # container imports this module
    return [
        StringField('image_id'),
        Field('width_px', 'Q'),
        Field('height_px', 'Q'),
        Field('channels', 'B'),
        Field('bytes_per_sample', 'B'),
        Field('microns_per_pixel', 'd'),
        Field('magnification', 'd'),
        CategoricalField('stain', 'B', Stain, mappings.STAIN_CODES),
        Field('chunk_w', 'I'),
        Field('chunk_h', 'I'),
        Field('cols', 'I'),
        Field('rows', 'I'),
        Field('variable_count', 'I'),
    ]


def variable_fields() -> List[Field]:
    """One tile variable record, repeated row-major after the meta block."""
    return [
        StringField('name'),
        Field('row', 'I'),
        Field('col', 'I'),
        Field('logical_h', 'I'),
        Field('logical_w', 'I'),
        Field('channels', 'B'),
        Field('byte_offset', 'Q'),
        Field('byte_length', 'Q'),
        Field('crc32', 'I'),
    ]


def trailer_fields() -> List[Field]:
    """Container trailer, 24 bytes, always the last bytes of the file."""
    return [
        Field('index_offset', 'Q'),
        Field('index_length', 'Q'),
        Field('index_crc32', 'I'),
        ConstantField('end_magic', '4s', b'WSTE'),
    ]


def blob_header_fields() -> List[Field]:
    """Whole-image blob header, 16 bytes."""
    return [
        ConstantField('magic', '4s', b'WSTB'),
        Field('width', 'I'),
        Field('height', 'I'),
        Field('channels', 'B'),
        Field('bytes_per_sample', 'B'),
        ConstantField('reserved', '2s', b'\x00\x00'),
    ]


def patch_header_fields() -> List[Field]:
    """Patch file header, 20 bytes."""
    return [
        ConstantField('magic', '4s', b'WSTP'),
        Field('h', 'I'),
        Field('w', 'I'),
        Field('c', 'I'),
        Field('bytes_per_sample', 'B'),
        ConstantField('reserved', '3s', b'\x00\x00\x00'),
    ]
