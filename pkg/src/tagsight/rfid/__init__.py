from .channel import ChannelParams, ReadEvent, backscatter_rssi, normalized_rssi, tag_respond
from .protocol import (InventoryRequest, MsgType, ReadRequest, ReadResponse, Status, TagReport, TagReportEntry,
                       WriteRequest, WriteResponse, decode_message, encode_message)
from .reader import ReaderService, ReaderSession, SimulatedReader, trigger_temperature
from .sensors import TemperatureReading, WaterLevel, decode_temp_word, decode_water_level, encode_temp_word
from .tags import TagPopulation, TagRecord, epc_hex, parse_epc

__all__ = [
    "ChannelParams", "InventoryRequest", "MsgType", "ReadEvent", "ReadRequest", "ReadResponse", "ReaderService",
    "ReaderSession", "SimulatedReader", "Status", "TagPopulation", "TagRecord", "TagReport", "TagReportEntry",
    "TemperatureReading", "WaterLevel", "WriteRequest", "WriteResponse", "backscatter_rssi", "decode_message",
    "decode_temp_word", "decode_water_level", "encode_message", "encode_temp_word", "epc_hex",
    "normalized_rssi", "parse_epc", "tag_respond", "trigger_temperature",
]
